"""Instantaneous spectrum of H_Q(s): eigen-tracking, minimal gap and jump tables."""

from __future__ import annotations

import functools
import io
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .spin_model import assemble_hq, dhq_ds, hq_stack

GROUP_RTOL = 1e-9


@dataclass(frozen=True)
class EigenSystem:
    s: float
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


def _fix_phase(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eigendecompose(h, previous: EigenSystem | None = None, s: float = np.nan) -> EigenSystem:
    """Sorted eigensystem of a real symmetric matrix.

    Without ``previous`` the largest-magnitude component of every vector is made
    positive; with it, each vector is sign-aligned to its predecessor.
    """
    h = np.asarray(h)
    if not np.all(np.isfinite(h)):
        raise linalg.LinAlgError("non-finite Hamiltonian entries")
    energies, vecs = np.linalg.eigh(h)
    return align(energies, vecs, previous, s)


def align(energies, vecs, previous: EigenSystem | None = None, s: float = np.nan) -> EigenSystem:
    """Fix eigenvector signs, either absolutely or against ``previous``."""
    if previous is None:
        vecs = _fix_phase(vecs)
    else:
        overlap = np.einsum("ij,ij->j", previous.vectors, vecs)
        vecs = vecs * np.where(overlap < 0, -1.0, 1.0)
    return EigenSystem(float(s), energies, vecs)


class Assembler:
    """Binds sector, problem and schedule into s -> H_Q(s)."""

    def __init__(self, sector, problem, schedule):
        self.sector = sector
        self.problem = problem
        self.schedule = schedule

    def __call__(self, s: float) -> np.ndarray:
        return assemble_hq(self.sector, self.problem, self.schedule, s)

    def derivative(self, s: float) -> np.ndarray:
        return dhq_ds(self.sector, self.problem, self.schedule, s)

    def eigensystem(self, s: float, previous=None) -> EigenSystem:
        return eigendecompose(self(s), previous, s)

    def raw_eigensystems(self, s_values, chunk: int = 1024):
        """Unaligned (energies, vectors) pairs for many s, diagonalised in batches."""
        s_values = np.asarray(s_values, dtype=float)
        for lo in range(0, len(s_values), chunk):
            h = hq_stack(self.sector, self.problem, self.schedule, s_values[lo : lo + chunk])
            if not np.all(np.isfinite(h)):
                raise linalg.LinAlgError("non-finite Hamiltonian entries")
            energies, vecs = np.linalg.eigh(h)
            yield from zip(energies, vecs)

    def gap(self, s: float) -> float:
        e = linalg.eigh_tridiagonal(
            np.diag(self(s)).copy(),
            np.diag(self(s), 1).copy(),
            eigvals_only=True,
            select="i",
            select_range=(0, 1),
        )
        return float(e[1] - e[0])

    def levels(self, s: float, count: int) -> np.ndarray:
        h = self(s)
        count = min(count, h.shape[0])
        return linalg.eigh_tridiagonal(
            np.diag(h).copy(), np.diag(h, 1).copy(), eigvals_only=True, select="i", select_range=(0, count - 1)
        )


class GapBracketError(ValueError):
    def __init__(self, minima):
        self.minima = minima
        where = ", ".join(f"s={s:.4f} gap={g:.4g}" for s, g in minima)
        super().__init__(f"gap is not unimodal on the bracket; local minima: {where}")


def locate_min_gap(assembler, s_range=(0.0, 1.0), tol: float = 1e-6, resolution: float = 1e-3):
    """Minimum of the lowest gap: coarse scan then golden-section refinement.

    Raises GapBracketError when the scan finds several interior minima or
    the minimum sits on an end of the range.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = s_range
    count = max(int(round((hi - lo) / resolution)) + 1, 3)
    grid = np.linspace(lo, hi, count)
    gaps = np.array([assembler.gap(s) for s in grid])
    interior = np.flatnonzero((gaps[1:-1] < gaps[:-2]) & (gaps[1:-1] <= gaps[2:])) + 1
    if len(interior) != 1:
        cand = list(interior) if len(interior) else [int(np.argmin(gaps))]
        raise GapBracketError([(float(grid[i]), float(gaps[i])) for i in cand])
    i = interior[0]
    res = optimize.minimize_scalar(
        assembler.gap, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden", tol=tol / grid[i]
    )
    return float(res.x), float(res.fun)


@dataclass(frozen=True)
class JumpTable:
    """Lindblad channels at one s.

    Channel 0 is the collected dephasing operator; channel k >= 1 is the pair
    (a[k], b[k]) driving |b> -> |a> at Bohr frequency omega[k] = e_b - e_a.
    """

    eig: EigenSystem
    matrix: np.ndarray  # <e_a| sum sigma^z |e_b>
    a: np.ndarray
    b: np.ndarray
    omega: np.ndarray

    @property
    def channels(self) -> int:
        return len(self.omega)

    def operator(self, k: int) -> np.ndarray:
        """L_k in the computational (Hamming-weight) basis."""
        v = self.eig.vectors
        if k == 0:
            return (v * np.diag(self.matrix)) @ v.T
        a, b = self.a[k], self.b[k]
        return self.matrix[a, b] * np.outer(v[:, a], v[:, b])


def group_frequencies(omega: np.ndarray, rtol: float = GROUP_RTOL, scale: float | None = None) -> np.ndarray:
    """Snap Bohr frequencies that agree within rtol to a shared value.

    Groups are chains of sorted values spaced by at most rtol * scale; a
    group reaching zero collapses to exactly 0.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.size == 0:
        return omega.copy()
    if scale is None:
        scale = max(np.abs(omega).max(), 1.0)
    atol = rtol * scale
    order = np.argsort(omega, kind="stable")
    srt = omega[order]
    new = np.concatenate([[True], np.diff(srt) > atol])
    gid = np.cumsum(new) - 1
    means = np.bincount(gid, srt) / np.bincount(gid)
    closest = np.minimum.reduceat(np.abs(srt), np.flatnonzero(new))
    means[closest <= atol] = 0.0
    out = np.empty_like(srt)
    out[order] = means[gid]
    return out


@functools.lru_cache(maxsize=16)
def _pair_index(dim: int):
    a, b = np.nonzero(~np.eye(dim, dtype=bool))
    lookup = np.zeros((dim, dim), dtype=np.int64)
    lookup[a, b] = np.arange(len(a)) + 1
    lower = np.flatnonzero(a > b) + 1
    mirror = lookup[b[lower - 1], a[lower - 1]]
    a = np.concatenate([[-1], a])
    b = np.concatenate([[-1], b])
    for arr in (a, b, lower, mirror):
        arr.setflags(write=False)
    return a, b, lower, mirror


def build_jump_table(eig: EigenSystem, coupling: np.ndarray) -> JumpTable:
    """Rotate the diagonal coupling into the eigenbasis and enumerate channels."""
    v = eig.vectors
    mat = (v.T * coupling) @ v
    mat = 0.5 * (mat + mat.T)
    dim = len(eig.energies)
    a, b, lower, mirror = _pair_index(dim)
    omega = np.empty(len(a))
    omega[0] = 0.0
    omega[1:] = eig.energies[b[1:]] - eig.energies[a[1:]]
    scale = max(eig.energies[-1] - eig.energies[0], 1.0)
    omega = group_frequencies(omega, scale=scale)
    # exact antisymmetry w(a,b) = -w(b,a) after grouping
    omega[lower] = -omega[mirror]
    return JumpTable(eig, mat, a, b, omega)


def adiabatic_h(assembler, grid: int = 2001) -> float:
    """max over s, a, b of |<e_a| dH_Q/ds |e_b>| on a uniform s grid."""
    best = 0.0
    for s in np.linspace(0.0, 1.0, grid):
        eig = assembler.eigensystem(s)
        m = eig.vectors.T @ assembler.derivative(s) @ eig.vectors
        best = max(best, float(np.abs(m).max()))
    return best


def spectrum_table(assembler, levels: int = 10, points: int = 1001):
    s = np.linspace(0.0, 1.0, points)
    eps = np.array([assembler.levels(x, levels) for x in s])
    return s, eps


def spectrum_csv(assembler, levels: int = 10, points: int = 1001, header: str = "") -> str:
    s, eps = spectrum_table(assembler, levels, points)
    buf = io.StringIO()
    for line in header.splitlines():
        buf.write(f"# {line}\n")
    buf.write(",".join(["s"] + [f"eps_{k + 1}" for k in range(eps.shape[1])]) + "\n")
    for x, row in zip(s, eps):
        buf.write(f"{x:.6f}," + ",".join(f"{e:.12g}" for e in row) + "\n")
    return buf.getvalue()
