"""Hamiltonians of permutation-symmetric spin models in the maximum-spin sector.

The sector of total spin S = n/2 is spanned by the Dicke states |w>, where the
Hamming weight w = 0..n counts down spins. All energies are angular
frequencies in units of 1e9 rad/s and times are in ns, so a phase is simply
energy * time.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

MAX_QUBITS = 64

BUNDLED_SCHEDULE = "dw2000q_like.csv"


@dataclass(frozen=True)
class SpinSector:
    """Collective operators of n qubits restricted to the symmetric subspace."""

    n: int
    sz: np.ndarray = field(repr=False)  # diagonal of S_z
    sx_off: np.ndarray = field(repr=False)  # off-diagonal of the tridiagonal S_x

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def spin(self) -> float:
        return self.n / 2

    @property
    def coupling(self) -> np.ndarray:
        """Diagonal of the bath coupling operator sum_i sigma^z_i = 2 S_z."""
        return 2.0 * self.sz

    def sz_matrix(self) -> np.ndarray:
        return np.diag(self.sz)

    def sx_matrix(self) -> np.ndarray:
        return np.diag(self.sx_off, 1) + np.diag(self.sx_off, -1)

    def sy_matrix(self) -> np.ndarray:
        # S_y = (S+ - S-) / 2i, S+ raises m, i.e. lowers w
        return (np.diag(self.sx_off, 1) - np.diag(self.sx_off, -1)) / 1j


def build_sector(n: int) -> SpinSector:
    if not isinstance(n, (int, np.integer)) or n <= 0:
        raise ValueError(f"qubit count must be a positive integer, got {n!r}")
    if n > MAX_QUBITS:
        raise ValueError(f"qubit count {n} exceeds the guard of {MAX_QUBITS}")
    spin = n / 2
    m = spin - np.arange(n + 1)
    # <m-1|S_x|m> = 1/2 sqrt(S(S+1) - m(m-1)), m = S - w
    off = 0.5 * np.sqrt(spin * (spin + 1) - m[:-1] * (m[:-1] - 1))
    sz = m.astype(float)
    sz.setflags(write=False)
    off.setflags(write=False)
    return SpinSector(int(n), sz, off)


def pspin_energy(n, p, w):
    """Energy -(n/2)(1 - 2w/n)^p of the Dicke state with Hamming weight w."""
    w = np.asarray(w)
    if p < 1:
        raise ValueError("p must be >= 1")
    if np.any(w < 0) or np.any(w > n):
        raise ValueError("Hamming weight out of range")
    return -(n / 2) * (1 - 2 * w / n) ** p


@dataclass(frozen=True)
class ProblemHamiltonian:
    kind: str
    n: int
    diagonal: np.ndarray = field(repr=False)
    p: int | None = None


def build_problem(kind: str, n: int, p: int | None = None) -> ProblemHamiltonian:
    if n < 1:
        raise ValueError("need at least one qubit")
    w = np.arange(n + 1)
    if kind in ("p-spin", "pspin"):
        if p is None:
            raise ValueError("p-spin problem requires the exponent p")
        diag = np.asarray(pspin_energy(n, p, w), dtype=float)
        kind = "p-spin"
    elif kind == "search":
        diag = np.zeros(n + 1)
        diag[0] = -n / 2
        p = None
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    diag.setflags(write=False)
    return ProblemHamiltonian(kind, n, diag, p)


class ScheduleError(ValueError):
    pass


class AnnealSchedule:
    """Tabulated A(s), B(s) with a shape-preserving cubic interpolant."""

    def __init__(self, s, a, b, source: str = "<memory>", digest: str = ""):
        s, a, b = (np.asarray(x, dtype=float) for x in (s, a, b))
        _validate(s, a, b)
        self.s, self.a, self.b = s, a, b
        self.source = source
        self.digest = digest
        self._a = PchipInterpolator(s, a)
        self._b = PchipInterpolator(s, b)
        self._da = self._a.derivative()
        self._db = self._b.derivative()

    def __repr__(self):
        return f"AnnealSchedule({len(self.s)} samples from {self.source})"

    def _at_knots(self, s, values, interp):
        out = interp(s)
        idx = np.searchsorted(self.s, s)
        idx = np.clip(idx, 0, len(self.s) - 1)
        hit = self.s[idx] == s
        if np.ndim(out) == 0:
            return float(values[idx]) if hit else float(out)
        out[hit] = values[idx[hit]]
        return out

    def A(self, s):
        return self._at_knots(s, self.a, self._a)

    def B(self, s):
        return self._at_knots(s, self.b, self._b)

    def dA(self, s):
        return self._da(s)

    def dB(self, s):
        return self._db(s)

    def __call__(self, s):
        return self.A(s), self.B(s)


def _validate(s, a, b):
    if not (s.ndim == a.ndim == b.ndim == 1 and len(s) == len(a) == len(b)):
        raise ScheduleError("columns s, A, B must be 1-d and of equal length")
    if len(s) < 2:
        raise ScheduleError("schedule needs at least two samples")
    if not np.all(np.isfinite(np.concatenate([s, a, b]))):
        raise ScheduleError("non-finite schedule value")
    bad = np.flatnonzero(np.diff(s) <= 0)
    if bad.size:
        raise ScheduleError(f"s not strictly increasing at row {bad[0] + 1}")
    if s[0] != 0.0 or s[-1] != 1.0:
        raise ScheduleError("s must cover [0, 1] exactly")
    bad = np.flatnonzero(np.diff(a) > 0)
    if bad.size:
        raise ScheduleError(f"A increases at row {bad[0] + 1}")
    bad = np.flatnonzero(np.diff(b) < 0)
    if bad.size:
        raise ScheduleError(f"B decreases at row {bad[0] + 1}")
    if np.any(a < 0) or np.any(b < 0):
        raise ScheduleError("A and B must be non-negative")
    if not a[-1] < 1e-2 * b[-1]:
        raise ScheduleError("A(1)/B(1) must be below 1e-2")
    if not b[0] < 1e-2 * a[0]:
        raise ScheduleError("B(0)/A(0) must be below 1e-2")


def parse_schedule(text: str, source: str = "<string>") -> AnnealSchedule:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ScheduleError(f"{source}: empty schedule") from None
    if header != ["s", "A", "B"]:
        raise ScheduleError(f"{source}: header must be 's,A,B', got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        try:
            rows.append([float(x) for x in row])
        except ValueError:
            raise ScheduleError(f"{source}: unparsable row {lineno}: {row}") from None
        if len(row) != 3:
            raise ScheduleError(f"{source}: row {lineno} has {len(row)} fields")
    data = np.array(rows)
    if data.ndim != 2 or len(data) < 2:
        raise ScheduleError(f"{source}: schedule needs at least two rows")
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    try:
        return AnnealSchedule(data[:, 0], data[:, 1], data[:, 2], source, digest)
    except ScheduleError as err:
        raise ScheduleError(f"{source}: {err}") from None


def load_schedule(path=None) -> AnnealSchedule:
    """Read a schedule CSV (header ``s,A,B``); ``None`` loads the bundled one."""
    if path is None:
        text = resources.files("qapause.data").joinpath(BUNDLED_SCHEDULE).read_text()
        return parse_schedule(text, f"bundled:{BUNDLED_SCHEDULE}")
    path = Path(path)
    return parse_schedule(path.read_text(), str(path))


def linear_schedule(scale: float = 1.0, samples: int = 11) -> AnnealSchedule:
    s = np.linspace(0.0, 1.0, samples)
    return AnnealSchedule(s, scale * (1 - s), scale * s, "linear")


def schedule_to_csv(schedule: AnnealSchedule, comment: str = "") -> str:
    buf = io.StringIO()
    for line in comment.splitlines():
        buf.write(f"# {line}\n")
    buf.write("s,A,B\n")
    for row in zip(schedule.s, schedule.a, schedule.b):
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def assemble_hq(sector: SpinSector, problem: ProblemHamiltonian, schedule, s: float) -> np.ndarray:
    """H_Q(s) = A(s) (-S_x) + B(s) H_problem as a dense real symmetric matrix."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s={s} outside [0, 1]")
    a, b = schedule(s)
    return hq_from_coefficients(sector, problem, a, b)


def hq_from_coefficients(sector, problem, a, b) -> np.ndarray:
    h = np.diag(b * problem.diagonal)
    off = -a * sector.sx_off
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def dhq_ds(sector, problem, schedule, s) -> np.ndarray:
    return hq_from_coefficients(sector, problem, schedule.dA(s), schedule.dB(s))


def hq_stack(sector: SpinSector, problem: ProblemHamiltonian, schedule, s) -> np.ndarray:
    """H_Q at many schedule points at once, shape (len(s), n+1, n+1)."""
    s = np.asarray(s, dtype=float)
    if np.any((s < 0.0) | (s > 1.0)):
        raise ValueError("s outside [0, 1]")
    a, b = schedule(s)
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    i = np.arange(sector.dim)
    h = np.zeros((len(s), sector.dim, sector.dim))
    h[:, i, i] = b[:, None] * problem.diagonal
    off = -a[:, None] * sector.sx_off
    h[:, i[:-1], i[1:]] = off
    h[:, i[1:], i[:-1]] = off
    return h
