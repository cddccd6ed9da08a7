"""Reference calculations used to check the trajectory engine.

* a dense density-matrix integrator of the adiabatic Lindblad equation,
* the two-level rate model for the population loss just before the gap,
* the saturation law fitted to peak fidelity versus pause length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .bath import BathParams, LambShiftTable, gamma
from .protocol import PauseProtocol, pause_map
from .spectral import Assembler, build_jump_table, eigendecompose

ORACLE_MAX_QUBITS = 12


class PositivityError(ArithmeticError):
    pass


@dataclass
class OracleResult:
    t: np.ndarray
    s: np.ndarray
    rho: np.ndarray  # (checkpoints, dim, dim) in the |w> basis
    rho11: np.ndarray  # ground-state population of H_Q(s) at each checkpoint
    nfev: int


def channel_operators(assembler: Assembler, s: float, bath: BathParams, lamb: LambShiftTable | None):
    """Computational-basis L_alpha, gamma(w_alpha), S(w_alpha) at one s."""
    eig = eigendecompose(assembler(s), None, s)
    jt = build_jump_table(eig, assembler.sector.coupling)
    ops = np.array([jt.operator(k) for k in range(jt.channels)])
    rates = gamma(jt.omega, bath)
    if lamb is None:
        shifts = np.zeros(jt.channels)
    else:
        shifts = lamb(jt.omega)
        shifts[0] = lamb.zero
    return eig, ops, rates, shifts


def lindblad_rhs(rho, h, ops, rates, shifts):
    """d rho/dt = -i[H_Q + H_LS, rho] + sum_alpha gamma_alpha D[L_alpha] rho."""
    ltl = np.einsum("kji,kjl->kil", ops, ops)  # L^T L, operators are real
    h_ls = np.tensordot(shifts, ltl, axes=1)
    hh = h + h_ls
    out = -1j * (hh @ rho - rho @ hh)
    jump = np.einsum("k,kij,jl,kml->im", rates, ops, rho, ops)
    anti = np.tensordot(rates, ltl, axes=1)
    out += jump - 0.5 * (anti @ rho + rho @ anti)
    return out


def check_density(rho, trace_tol=1e-8, herm_tol=1e-10, pos_tol=1e-8):
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        raise PositivityError(f"density matrix not Hermitian (deviation {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise PositivityError(f"trace drifted to {tr!r}")
    low = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if low < -pos_tol:
        raise PositivityError(f"negative eigenvalue {low:.3g}")


def dense_lindblad_integrate(
    assembler: Assembler,
    protocol: PauseProtocol,
    bath: BathParams | None,
    lamb: LambShiftTable | None = None,
    checkpoints=21,
    rtol: float = 1e-9,
    atol: float = 1e-11,
    method: str = "DOP853",
) -> OracleResult:
    """Adaptive Runge-Kutta integration of the full density matrix.

    Starts in the ground state of H_Q(0). Channels are rebuilt from the
    instantaneous eigensystem at every right-hand-side call; positivity, trace
    and Hermiticity are checked at the checkpoints, never enforced.
    """
    n = assembler.sector.n
    if n > ORACLE_MAX_QUBITS:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_QUBITS}")
    dim = n + 1
    total = protocol.total_time
    times = np.linspace(0.0, total, checkpoints) if np.ndim(checkpoints) == 0 else np.asarray(checkpoints, float)
    dissipative = bath is not None and bath.eta > 0

    def rhs(t, y):
        s = pause_map(min(t, total), protocol)
        rho = y.reshape(dim, dim)
        h = assembler(s)
        if not dissipative:
            return (-1j * (h @ rho - rho @ h)).ravel()
        _, ops, rates, shifts = channel_operators(assembler, s, bath, lamb)
        return lindblad_rhs(rho, h, ops, rates, shifts).ravel()

    psi0 = eigendecompose(assembler(0.0)).vectors[:, 0]
    rho0 = np.outer(psi0, psi0).astype(complex)
    # a pause introduces kinks in s(t); integrate piecewise so the stepper never straddles them
    edges = [0.0, total]
    if protocol.paused:
        edges = sorted({0.0, *protocol.pause_window, total})
    found = {}
    y = rho0.ravel()
    nfev = 0
    for lo, hi in zip(edges[:-1], edges[1:]):
        want = times[(times > lo) & (times <= hi)] if lo > 0 else times[times <= hi]
        t_eval = np.union1d(want, [hi])
        sol = integrate.solve_ivp(rhs, (lo, hi), y, method=method, t_eval=t_eval, rtol=rtol, atol=atol)
        if not sol.success:
            raise ArithmeticError(f"oracle integration failed: {sol.message}")
        nfev += sol.nfev
        for t, yv in zip(sol.t, sol.y.T):
            found[float(t)] = yv
        y = sol.y[:, -1]
    states = [found[float(t)] for t in times]
    rho = np.array(states).reshape(-1, dim, dim)
    s = np.array([pause_map(t, protocol) for t in times])
    rho11 = np.empty(len(times))
    for j, (sj, r) in enumerate(zip(s, rho)):
        check_density(r)
        v = eigendecompose(assembler(sj), None, sj).vectors[:, 0]
        rho11[j] = float(np.real(v @ r @ v))
    return OracleResult(times, s, rho, rho11, nfev)


@dataclass(frozen=True)
class TwoLevelModel:
    delta: float
    temperature: float
    tau: float
    s_t: float
    s_delta: float
    rho_t: float  # rho_11(s_T)
    rate_down: float  # Gamma_{2->1} = gamma(Delta)
    rate_up: float  # Gamma_{1->2} = exp(-beta Delta) gamma(Delta)
    s1: float
    c: float
    grouping: str

    @property
    def equilibrium(self) -> float:
        return self.rho_t - self.c

    def rho11(self, s):
        return self.rho_t - self.c * (1 - np.exp(-(np.asarray(s) - self.s_t) / self.s1))

    @property
    def prediction(self) -> float:
        """rho_11 just before the gap."""
        return float(self.rho11(self.s_delta))

    def integrate(self, rtol: float = 1e-12, atol: float = 1e-14) -> float:
        """Numeric solution of the rate equation the closed form solves."""
        k = 1 / (self.tau * self.s1 * (self.rate_down + self.rate_up))

        def rhs(s, y):
            return [self.tau * k * (self.rate_down * (1 - y[0]) - self.rate_up * y[0])]

        sol = integrate.solve_ivp(rhs, (self.s_t, self.s_delta), [self.rho_t], method="DOP853", rtol=rtol, atol=atol)
        return float(sol.y[0, -1])


def gap_equals_temperature(assembler: Assembler, s_delta: float, temperature: float, reach: float = 0.3) -> float:
    """Last s before s_delta with gap = T, by bisection on the gap curve."""
    f = lambda s: assembler.gap(s) - temperature
    if f(s_delta) >= 0:
        raise ValueError("the minimal gap is not below the temperature")
    grid = np.linspace(s_delta, max(s_delta - reach, 0.0), 301)
    vals = np.array([f(s) for s in grid])
    above = np.flatnonzero(vals > 0)
    if not above.size:
        raise ValueError("gap stays below T on the whole search range")
    i = above[0]
    return float(optimize.brentq(f, grid[i], grid[i - 1], xtol=1e-14))


def two_level_predict(
    delta: float,
    temperature: float,
    eta: float,
    tau: float,
    rho_t: float = 1.0,
    s_t: float = 0.0,
    s_delta: float = 0.0,
    cutoff: float = 1000.0,
    grouping: str = "printed",
) -> TwoLevelModel:
    """Population loss between s_T and s_delta with the gap frozen at delta.

    grouping="printed":  s1 = 1 / (tau sqrt(gamma) (1 + e^{-beta delta}))
    grouping="rate":     s1 = 1 / (tau gamma (1 + e^{-beta delta}))
    In both cases rho relaxes toward 1 / (1 + e^{-beta delta}), so
    C = rho_t - 1 / (1 + e^{-beta delta}). Only "rate" is the exact solution of
    the rate equation with the bare rates; "printed" scales them by 1/sqrt(gamma).
    """
    if delta <= 0 or temperature <= 0:
        raise ValueError("delta and temperature must be positive")
    bath = BathParams(eta, temperature, cutoff)
    down = gamma(delta, bath) if eta > 0 else 0.0
    boltz = math.exp(-delta / temperature)
    up = boltz * down
    if grouping == "printed":
        s1 = math.inf if down == 0 else 1 / (tau * math.sqrt(down) * (1 + boltz))
    elif grouping == "rate":
        s1 = math.inf if down == 0 else 1 / (tau * down * (1 + boltz))
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    c = rho_t - 1 / (1 + boltz)
    return TwoLevelModel(delta, temperature, tau, s_t, s_delta, rho_t, down, up, s1, c, grouping)


@dataclass(frozen=True)
class SaturationFit:
    phi_sat: float
    alpha: float
    t_r: float
    l0: float
    covariance: np.ndarray
    residual_norm: float

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def __call__(self, lp):
        return saturation_law(np.asarray(lp, float), self.phi_sat, self.alpha, self.t_r, self.l0)

    def text(self) -> str:
        e = self.errors
        return (
            f"phi_sat = {self.phi_sat:.6g} +- {e[0]:.3g}\n"
            f"alpha   = {self.alpha:.6g} +- {e[1]:.3g}\n"
            f"T_r     = {self.t_r:.6g} +- {e[2]:.3g} ns\n"
            f"l0      = {self.l0:.6g} ns (fixed)\n"
            f"residual norm = {self.residual_norm:.3g}\n"
        )


def saturation_law(lp, phi_sat, alpha, t_r, l0):
    return phi_sat * (1 - alpha * np.exp(-(lp - l0) / t_r))


class FitError(RuntimeError):
    pass


def fit_saturation(lp, phi, l0: float = 100.0, max_nfev: int = 2000) -> SaturationFit:
    """Least-squares fit of phi_sat, alpha, T_r with l0 held fixed.

    Starting point: phi_sat = max(phi), alpha from the first point, T_r from
    a straight-line fit of log(1 - phi/phi_sat) against l_p.
    """
    lp = np.asarray(lp, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if len(lp) < 4:
        raise ValueError("need at least four points")
    if np.any(lp < l0):
        raise ValueError("pause lengths must be >= l0")
    order = np.argsort(lp)
    lp, phi = lp[order], phi[order]
    p0_sat = float(phi.max())
    a0 = max(1 - phi[0] / p0_sat, 1e-3)
    gap = 1 - phi / p0_sat
    use = gap > 1e-12
    t0 = (lp[-1] - lp[0]) / 3 or 1.0
    if use.sum() >= 2:
        slope = np.polyfit(lp[use], np.log(gap[use]), 1)[0]
        if slope < 0:
            t0 = -1 / slope
    p0 = [p0_sat, a0, t0]
    try:
        popt, pcov, info, msg, ier = optimize.curve_fit(
            lambda x, a, b, c: saturation_law(x, a, b, c, l0),
            lp,
            phi,
            p0=p0,
            bounds=([0.0, -np.inf, 1e-9], [np.inf, np.inf, np.inf]),
            max_nfev=max_nfev,
            full_output=True,
            ftol=1e-15,
            xtol=1e-15,
            gtol=1e-15,
        )
    except RuntimeError as err:
        raise FitError(str(err)) from None
    resid = float(np.linalg.norm(info["fvec"]))
    return SaturationFit(float(popt[0]), float(popt[1]), float(popt[2]), float(l0), pcov, resid)
