"""Ohmic bath: transition rates, Lamb shift and weak-coupling validity checks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants, integrate, special
from scipy.interpolate import CubicSpline

# k_B * 12.1 mK / hbar in 1e9 rad/s
DEVICE_TEMPERATURE = constants.k * 12.1e-3 / constants.hbar / 1e9


def kelvin_to_angular_ghz(kelvin: float) -> float:
    return constants.k * kelvin / constants.hbar / 1e9


@dataclass(frozen=True)
class BathParams:
    """Ohmic bath at temperature T with coupling eta and cutoff omega_c.

    Frequencies are in 1e9 rad/s, so beta = 1/T is in ns.
    """

    eta: float = 1e-3
    temperature: float = 1.57
    cutoff: float = 1000.0

    def __post_init__(self):
        if self.eta < 0 or self.temperature <= 0 or self.cutoff <= 0:
            raise ValueError("bath parameters must be positive (eta may be zero)")
        if self.beta * self.cutoff < 10:
            warnings.warn(f"beta*omega_c = {self.beta * self.cutoff:.3g} is not >> 1", stacklevel=2)

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature


def gamma(omega, params: BathParams):
    """Ohmic rate 2 pi eta w exp(-|w|/wc) / (1 - exp(-beta w)), in 1/ns.

    The cutoff uses |w| so that gamma(-w) = exp(-beta w) gamma(w) holds exactly.
    """
    w = np.asarray(omega, dtype=float)
    beta = params.beta
    x = beta * w
    small = np.abs(x) < 1e-6
    pos = np.where(small | (x < 0), 1.0, x)
    neg = np.where(small | (x > 0), -1.0, x)
    # x / (1 - e^-x), written for each sign so nothing overflows
    ratio = np.where(
        small,
        1 + x / 2 + x * x / 12,
        np.where(x > 0, pos / -np.expm1(-pos), neg * np.exp(neg) / np.expm1(neg)),
    )
    out = 2 * np.pi * params.eta / beta * ratio * np.exp(-np.abs(w) / params.cutoff)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuadratureConfig:
    span: float = 40.0  # integration half-width in units of omega_c
    tol: float = 1e-11
    limit: int = 400


def lamb_shift(omega: float, params: BathParams, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Principal value of int dw'/2pi gamma(w')/(w - w').

    Pairing w' = w +- u removes the pole:
    S(w) = -1/2pi int_0^L [gamma(w+u) - gamma(w-u)] / u du.
    """
    if params.eta == 0:
        return 0.0
    span = quad.span * params.cutoff

    def integrand(u):
        if u == 0.0:
            h = 1e-6 * max(1.0, abs(omega))
            return (gamma(omega + h, params) - gamma(omega - h, params)) / h
        return (gamma(omega + u, params) - gamma(omega - u, params)) / u

    # breakpoints at the thermal and cutoff scales keep the adaptive rule honest
    scales = [10.0 / params.beta, 50.0 / params.beta, abs(omega), params.cutoff, 5 * params.cutoff, 15 * params.cutoff]
    pts = sorted({p for p in scales if 0 < p < span})
    scale = 2 * np.pi * params.eta * params.cutoff
    total, err = 0.0, 0.0
    edges = [0.0, *pts, span]
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, lo, hi, epsabs=1e-2 * quad.tol * scale, epsrel=quad.tol, limit=quad.limit)
        total += val
        err += e
    if err > 1e3 * quad.tol * max(abs(total), scale):
        raise ArithmeticError(f"Lamb shift quadrature did not converge at w={omega}: err={err:.3g}")
    return -total / (2 * np.pi)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def lamb_shift_split(omega, params: BathParams, panels: int = 48):
    """Vectorised S(w) from the zero-temperature / thermal split of gamma.

    gamma(w) = 2 pi eta e^{-|w|/wc} [w theta(w) + |w| n(|w|)], n the Bose factor.
    The first term transforms in closed form through the exponential integral,
    the second decays on the thermal scale and is integrated with a composite
    Gauss-Legendre rule around the pole.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    eta, wc, beta = params.eta, params.cutoff, params.beta
    if eta == 0:
        return np.zeros_like(w) if np.ndim(omega) else 0.0
    x = w / wc
    with np.errstate(invalid="ignore", divide="ignore"):
        zero_t = np.where(w == 0, 0.0, w * np.exp(-x) * special.expi(x))
    zero_t = eta * (zero_t - wc)

    def h(v):
        a = np.abs(v)
        y = np.maximum(a * beta, 1e-300)
        bose = np.where(y < 1e-8, 1 / beta, a * np.exp(-y) / -np.expm1(-y))
        return bose * np.exp(-a / wc)

    reach = 45.0 / beta  # Bose tail below 1e-19 beyond this
    aw = np.abs(w)[:, None]
    t = (np.arange(panels) + 0.5 * (1 + _GL_X[:, None])).T.ravel() / panels  # nodes on (0, 1)
    wt = np.tile(_GL_W / (2 * panels), panels)
    # two pieces split at the kink u = |w|: [lo, |w|] and [|w|, |w| + reach]
    lo = np.maximum(aw - reach, 0.0)
    u1 = lo + (aw - lo) * t
    u2 = aw + reach * t
    total = np.zeros_like(w)
    for u, jac in ((u1, aw - lo), (u2, np.full_like(aw, reach))):
        wc_ = w[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            f = (h(wc_ + u) - h(wc_ - u)) / u
        f = np.where(u > 0, f, 0.0)
        total += (f * wt).sum(axis=1) * jac[:, 0]
    out = zero_t - eta * total
    return out if np.ndim(omega) else float(out[0])


class LambShiftTable:
    """Spline of S(w) on [-wmax, wmax] for bulk evaluation at Bohr frequencies."""

    def __init__(self, params: BathParams, wmax: float, points: int = 4001):
        self.params = params
        self.wmax = float(wmax)
        # cluster nodes near w = 0 where thermal structure lives
        u = np.linspace(-1.0, 1.0, points)
        self.nodes = self.wmax * np.sinh(4 * u) / np.sinh(4.0)
        self.values = lamb_shift_split(self.nodes, params)
        self._spline = CubicSpline(self.nodes, self.values)
        self.zero = float(lamb_shift_split(0.0, params))

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(np.abs(omega) > self.wmax * (1 + 1e-12)):
            raise ValueError("frequency outside the tabulated Lamb shift range")
        return self._spline(omega)


def effective_coupling(params: BathParams, gap: float) -> float:
    """Conservative g scale sqrt(eta * omega_c * gap); g itself never enters the dynamics."""
    return math.sqrt(params.eta * params.cutoff * gap)


@dataclass
class Condition:
    name: str
    lhs: float
    rhs: float
    relation: str  # "<<" means lhs must be small relative to rhs
    fatal: bool = True

    @property
    def margin(self) -> float:
        return self.rhs / self.lhs if self.lhs else math.inf

    @property
    def ok(self) -> bool:
        return self.margin > 1.0

    def line(self) -> str:
        status = "PASS" if self.ok else "FLAG"
        return f"{self.name:<28s} lhs={self.lhs:.4g} rhs={self.rhs:.4g} margin={self.margin:.4g} {status}"


@dataclass
class ValidityReport:
    tau_b: float
    tau_m: float
    g_eff: float
    conditions: list

    def __getitem__(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def non_adiabatic_ok(self) -> bool:
        return all(c.ok for c in self.conditions if c.fatal)

    def text(self) -> str:
        head = [
            f"# tau_B={self.tau_b:.6g} ns tau_M={self.tau_m:.6g} ns g_eff={self.g_eff:.6g} (g_eff = sqrt(eta*wc*Delta))",
        ]
        return "\n".join(head + [c.line() for c in self.conditions]) + "\n"


def check_validity(params: BathParams, gap: float, h: float, tau: float, tau_pause: float = 0.0) -> ValidityReport:
    """Evaluate the weak-coupling / Markov conditions for the adiabatic master equation.

    Each condition is stored as lhs << rhs; the adiabatic one is informative only.
    ``tau_pause`` is added to the total wall time where the anneal duration enters.
    """
    beta, wc = params.beta, params.cutoff
    tau_b = beta / (2 * np.pi)
    tau_m = math.sqrt(2 * beta / wc)
    g = effective_coupling(params, gap)
    total = tau + tau_pause
    conds = [
        Condition("adiabatic tau >> h/D^2", h / gap**2, tau, "<<", fatal=False),
        Condition("weak g^2 tau_B << D", g**2 * tau_b, gap, "<<"),
        Condition("markov g tau_B << 1", g * tau_b, 1.0, "<<"),
        Condition("basis tau >> h tau_B^2", h * tau_b**2, total, "<<"),
        Condition("cutoff beta wc >> 1", 1.0, beta * wc, "<<"),
        Condition(
            "cutoff log bound",
            1.0 / (wc * math.log(beta * wc)),
            min(2 * tau_b, tau_b * h / tau * (1 / gap**2 + tau_b**2 / tau)),
            "<",
        ),
    ]
    return ValidityReport(tau_b, tau_m, g, conds)
