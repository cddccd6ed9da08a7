"""Monte Carlo wave-function unravelling of the adiabatic Lindblad equation.

Every operator in the adiabatic master equation (the Lamb shift, the decay
term of H_eff and the jump operators) is built from projectors on the
instantaneous eigenvectors of H_Q. Inside one propagation step H_eff is
therefore diagonal in that eigenbasis, and exp(-i H_eff dt) reduces to
phases and decays of the eigen-coefficients. Trajectories are stored as those
coefficients and advanced together, column by column, so that a whole batch
shares one eigendecomposition per step.

Waiting-time algorithm per trajectory: draw r, evolve with H_eff until the
squared norm falls to r, pick a channel with probability proportional to
<psi|C^dag C|psi>, apply it, renormalise, draw a new r.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .bath import BathParams, LambShiftTable, gamma
from .protocol import PauseProtocol, timeline
from .rng import TrajectoryStreams
from .spectral import Assembler, EigenSystem, JumpTable, align, build_jump_table, eigendecompose

NORM_TOL = 1e-12


@functools.lru_cache(maxsize=8)
def _lamb_table(bath: BathParams, wmax: float) -> LambShiftTable:
    return LambShiftTable(bath, wmax)


def spectral_width_bound(assembler: Assembler) -> float:
    """Upper bound on any Bohr frequency of H_Q(s) over the whole anneal."""
    sched = assembler.schedule
    n = assembler.sector.n
    span = np.ptp(assembler.problem.diagonal)
    return 1.05 * (n * float(np.max(sched.a)) + span * float(np.max(sched.b))) + 1.0


@dataclass(frozen=True)
class StepTable:
    """Everything the trajectories need at one schedule point s."""

    s: float
    eig: EigenSystem
    jumps: JumpTable | None  # None in the unitary limit
    channel_gamma: np.ndarray  # gamma(w_alpha), channel 0 being dephasing
    rates: np.ndarray  # rates[a, b] = gamma(w_ba) |A_ab|^2, zero diagonal
    dephasing: np.ndarray  # gamma(0) A_aa^2
    shift: np.ndarray  # Lamb shift per eigenstate
    decay: np.ndarray  # total jump rate out of each eigenstate
    lam: np.ndarray  # complex eigenvalues of H_eff

    @property
    def vectors(self) -> np.ndarray:
        return self.eig.vectors


def step_table(
    assembler: Assembler,
    s: float,
    bath: BathParams | None = None,
    lamb: LambShiftTable | None = None,
    previous: EigenSystem | None = None,
    eig: EigenSystem | None = None,
) -> StepTable:
    if eig is None:
        eig = eigendecompose(assembler(s), previous, s)
    dim = len(eig.energies)
    if bath is None or bath.eta == 0:
        zero = np.zeros(dim)
        return StepTable(s, eig, None, zero[:1], np.zeros((dim, dim)), zero, zero, zero, eig.energies.astype(complex))
    jt = build_jump_table(eig, assembler.sector.coupling)
    amp2 = jt.matrix**2
    g = gamma(jt.omega, bath)
    rates = np.zeros((dim, dim))
    rates[jt.a[1:], jt.b[1:]] = g[1:] * amp2[jt.a[1:], jt.b[1:]]
    deph = g[0] * np.diag(amp2)
    decay = rates.sum(axis=0) + deph
    if lamb is not None:
        sv = lamb(jt.omega)
        lsm = np.zeros((dim, dim))
        lsm[jt.a[1:], jt.b[1:]] = sv[1:] * amp2[jt.a[1:], jt.b[1:]]
        shift = lsm.sum(axis=0) + lamb.zero * np.diag(amp2)
    else:
        shift = np.zeros(dim)
    lam = eig.energies + shift - 0.5j * decay
    return StepTable(s, eig, jt, g, rates, deph, shift, decay, lam)


def build_effective(table: StepTable) -> np.ndarray:
    """Dense H_eff = H_Q + H_LS - i/2 sum_alpha C_alpha^dag C_alpha."""
    v = table.vectors
    return (v * table.lam) @ v.T


def effective_from_operators(table: StepTable, bath: BathParams, lamb: LambShiftTable | None) -> np.ndarray:
    """H_eff assembled operator by operator; slow reference for build_effective."""
    jt = table.jumps
    v = table.vectors
    h = (v * table.eig.energies) @ v.T + 0j
    for k in range(jt.channels):
        op = jt.operator(k)
        w = 0.0 if k == 0 else jt.omega[k]
        g = gamma(w, bath)
        ls = 0.0 if lamb is None else (lamb.zero if k == 0 else float(lamb(w)))
        h += (ls - 0.5j * g) * (op.T @ op)
    return h


def propagator(table: StepTable, dt: float) -> np.ndarray:
    """exp(-i H_eff dt) from the eigen-form of H_eff."""
    v = table.vectors
    return (v * np.exp(-1j * table.lam * dt)) @ v.T


def propagate_step(psi, table: StepTable, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = propagator(table, dt) @ psi
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite state after propagation")
    return out


def solve_jump_time(pop, decay, r, horizon, tol: float = NORM_TOL, max_iter: int = 200):
    """Times t* <= horizon with sum_a pop_a exp(-decay_a t*) = r, columnwise.

    The norm is a convex decreasing function of t, so Newton iterates started
    at t = 0 approach the root from the left and never overshoot it. Columns
    not converged after ``max_iter`` fall back to bisection on the bracket.
    """
    pop = np.atleast_2d(pop)
    t = np.zeros(pop.shape[1])
    decay = decay[:, None]
    r = np.asarray(r, dtype=float)
    horizon = np.broadcast_to(np.asarray(horizon, dtype=float), t.shape)
    todo = np.ones(t.shape, dtype=bool)
    for _ in range(max_iter):
        e = pop[:, todo] * np.exp(-decay * t[todo])
        f = e.sum(axis=0) - r[todo]
        df = -(decay * e).sum(axis=0)
        done = np.abs(f) < tol
        idx = np.flatnonzero(todo)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(df < 0, -f / df, 0.0)
        t[idx] = np.minimum(t[idx] + np.where(done, 0.0, step), horizon[idx])
        todo[idx[done | (step <= 0)]] = False
        if not todo.any():
            break
    if todo.any():
        idx = np.flatnonzero(todo)
        lo, hi = t[idx], horizon[idx].copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            n = (pop[:, idx] * np.exp(-decay * mid)).sum(axis=0)
            above = n > r[idx]
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(horizon[idx], 1.0)):
                break
        t[idx] = 0.5 * (lo + hi)
    return t


def find_jump_time(psi, table: StepTable, r: float, horizon: float):
    """Single-trajectory waiting time within one step.

    Returns (t*, state at t*) or (None, state at horizon) when the norm stays
    above r for the whole step.
    """
    c = table.vectors.T @ psi
    pop = np.abs(c) ** 2
    end = float((pop * np.exp(-table.decay * horizon)).sum())
    if end > r:
        return None, table.vectors @ (c * np.exp(-1j * table.lam * horizon))
    t = float(solve_jump_time(pop[:, None], table.decay, np.array([r]), horizon)[0])
    return t, table.vectors @ (c * np.exp(-1j * table.lam * t))


def channel_weights(coeffs, table: StepTable) -> np.ndarray:
    """Pi_alpha = <psi|C_alpha^dag C_alpha|psi> for eigen-coefficients, shape (channels, k)."""
    q = np.abs(np.atleast_2d(coeffs.T).T) ** 2
    jt = table.jumps
    pairs = table.rates[jt.a[1:], jt.b[1:]][:, None] * q[jt.b[1:], :]
    deph = table.dephasing @ q
    return np.vstack([deph[None, :], pairs])


def select_jump(weights, mu) -> np.ndarray:
    """Smallest m with cumulative probability sum_{alpha<=m} P_alpha >= mu."""
    weights = np.asarray(weights, dtype=float)
    squeeze = weights.ndim == 1
    weights = np.atleast_2d(weights.T).T
    total = weights.sum(axis=0)
    if np.any(total <= 0):
        raise ValueError("all jump weights vanish")
    cum = np.cumsum(weights / total, axis=0)
    alpha = (cum < np.asarray(mu)).sum(axis=0)
    # guard against round-off pushing past the last active channel
    last = weights.shape[0] - 1 - np.argmax(weights[::-1] > 0, axis=0)
    alpha = np.minimum(alpha, last)
    return int(alpha[0]) if squeeze else alpha


def apply_jump_coeffs(coeffs, table: StepTable, alpha):
    """C_alpha applied to eigen-coefficients, then renormalised."""
    c = np.array(coeffs, dtype=complex, copy=True)
    squeeze = c.ndim == 1
    c = np.atleast_2d(c.T).T
    alpha = np.atleast_1d(alpha)
    jt = table.jumps
    deph = alpha == 0
    if deph.any():
        c[:, deph] *= np.diag(jt.matrix)[:, None]
    k = np.flatnonzero(~deph)
    if k.size:
        a, b = jt.a[alpha[k]], jt.b[alpha[k]]
        amp = jt.matrix[a, b] * c[b, k]
        c[:, k] = 0.0
        c[a, k] = amp
    norm = np.sqrt((np.abs(c) ** 2).sum(axis=0))
    if np.any(norm == 0):
        raise ValueError("jump produced a zero-norm state")
    c /= norm
    return c[:, 0] if squeeze else c


def apply_jump(psi, table: StepTable, alpha: int) -> np.ndarray:
    c = table.vectors.T @ psi
    return table.vectors @ apply_jump_coeffs(c, table, alpha)


@dataclass
class Simulation:
    """One anneal: model, protocol, bath and numerical settings."""

    assembler: Assembler
    protocol: PauseProtocol
    bath: BathParams | None = None
    lamb_shift: bool = True
    dt: float = 0.01
    samples: int = 501
    seed: int = 0
    record_jumps: bool = False

    @property
    def dissipative(self) -> bool:
        return self.bath is not None and self.bath.eta > 0

    def lamb_table(self) -> LambShiftTable | None:
        if not (self.dissipative and self.lamb_shift):
            return None
        wmax = math.ceil(spectral_width_bound(self.assembler))
        return _lamb_table(self.bath, float(wmax))

    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.protocol.total_time, self.samples)


@dataclass
class TrajectoryBatch:
    """Raw per-trajectory records of one batch."""

    indices: np.ndarray
    t: np.ndarray
    s: np.ndarray
    rho11: np.ndarray  # (trajectories, samples)
    final_states: np.ndarray  # (trajectories, dim), computational basis
    final_eig_pop: np.ndarray  # (trajectories, dim)
    jump_counts: np.ndarray
    jump_log: list = field(default_factory=list)  # (index, t*, alpha, a, b, omega)


class _Block:
    """Trajectory state of one fixed-width lockstep block."""

    def __init__(self, sim: Simulation, indices, samples: int, dissipative: bool):
        self.indices = indices
        k = len(indices)
        self.streams = TrajectoryStreams(sim.seed, indices)
        self.r = self.streams.draw() if dissipative else np.zeros(k)
        self.rho11 = np.empty((k, samples))
        self.jump_counts = np.zeros(k, dtype=np.int64)
        self.log = [] if sim.record_jumps else None
        self.coeffs = None  # eigen-coefficients w.r.t. the current step table

    def record(self, j, basis, target):
        psi = basis @ self.coeffs
        amp = target @ psi
        self.rho11[:, j] = np.abs(amp) ** 2 / (np.abs(psi) ** 2).sum(axis=0)


def split_blocks(indices, block_size: int | None):
    indices = np.asarray(indices, dtype=np.int64)
    if block_size is None or block_size >= len(indices):
        return [indices]
    return [indices[i : i + block_size] for i in range(0, len(indices), block_size)]


def simulate(sim: Simulation, indices, block_size: int | None = None) -> TrajectoryBatch:
    """Run the trajectories ``indices`` of ``sim``.

    Trajectories advance in lockstep blocks of ``block_size`` consecutive
    indices; each step table is built once and applied to every block. The
    outcome of a trajectory depends only on (seed, index, block layout).
    """
    indices = np.asarray(indices, dtype=np.int64)
    asm = sim.assembler
    bath = sim.bath if sim.dissipative else None
    lamb = sim.lamb_table()
    times = sim.sample_times()
    steps, marks = timeline(sim.protocol, sim.dt, times)
    s_samples = np.array([_s_at(sim.protocol, t) for t in times])
    targets = []
    prev = None
    for s in s_samples:
        prev = eigendecompose(asm(s), prev, s)
        targets.append(prev.vectors[:, 0])
    blocks = [_Block(sim, idx, len(times), bath is not None) for idx in split_blocks(indices, block_size)]

    table = step_table(asm, 0.0, bath, lamb)
    psi0 = table.vectors[:, 0]
    for blk in blocks:
        blk.coeffs = np.zeros((len(psi0), len(blk.indices)), dtype=complex)
        blk.coeffs[0] = 1.0
    marks = np.asarray(marks)
    order = np.argsort(marks, kind="stable")
    pos = 0

    def flush(n_step):
        nonlocal pos
        while pos < len(order) and marks[order[pos]] == n_step:
            j = order[pos]
            for blk in blocks:
                blk.record(j, table.vectors, targets[j])
            pos += 1

    flush(0)
    hold_table = None
    ramp = asm.raw_eigensystems([st.s for st in steps if not st.hold])
    for n_step, st in enumerate(steps, start=1):
        if st.hold:
            if hold_table is None:
                hold_table = step_table(asm, st.s, bath, lamb, table.eig)
            new = hold_table
        else:
            eig = align(*next(ramp), table.eig, st.s)
            new = step_table(asm, st.s, bath, lamb, eig=eig)
        if new is not table:
            overlap = new.vectors.T @ table.vectors
            for blk in blocks:
                blk.coeffs = _real_matmul(overlap, blk.coeffs)
        table = new
        for blk in blocks:
            _advance(blk.coeffs, blk.r, table, st.dt, st.t0, blk.streams, blk.jump_counts, blk.indices, blk.log)
        flush(n_step)

    eig1 = eigendecompose(asm(s_samples[-1]), None, s_samples[-1])
    finals, pops = [], []
    for blk in blocks:
        psi = table.vectors @ blk.coeffs
        psi /= np.sqrt((np.abs(psi) ** 2).sum(axis=0))
        finals.append(psi.T)
        pops.append((np.abs(eig1.vectors.T @ psi) ** 2).T)
    return TrajectoryBatch(
        indices,
        times,
        s_samples,
        np.vstack([b.rho11 for b in blocks]),
        np.vstack(finals),
        np.vstack(pops),
        np.concatenate([b.jump_counts for b in blocks]),
        [e for b in blocks for e in (b.log or [])],
    )


def _s_at(protocol: PauseProtocol, t: float) -> float:
    from .protocol import pause_map

    return pause_map(min(t, protocol.total_time), protocol)


def _real_matmul(real, cplx):
    """real @ cplx without promoting the real matrix to complex."""
    out = real @ cplx.view(np.float64).reshape(cplx.shape[0], -1)
    return out.reshape(cplx.shape[0], -1).view(np.complex128)


def _advance(coeffs, r, table, dt, t0, streams, jump_counts, indices, log):
    """Evolve all columns of ``coeffs`` through one step of length dt, in place."""
    if not np.any(table.decay > 0):
        coeffs *= np.exp(-1j * table.lam * dt)[:, None]
        return
    k = coeffs.shape[1]
    elapsed = np.zeros(k)
    todo = np.arange(k)
    first = True
    while todo.size:
        c = coeffs[:, todo] if not first else coeffs
        rem = dt - elapsed[todo]
        pop = c.real**2 + c.imag**2
        if first:
            end = np.exp(-table.decay * dt) @ pop
        else:
            end = (pop * np.exp(-np.outer(table.decay, rem))).sum(axis=0)
        cross = end <= r[todo]
        quiet = todo[~cross]
        if first and quiet.size == k:
            coeffs *= np.exp(-1j * table.lam * dt)[:, None]
            return
        if quiet.size and first:
            coeffs[:, quiet] *= np.exp(-1j * table.lam * dt)[:, None]
        elif quiet.size:
            coeffs[:, quiet] *= np.exp(-1j * np.outer(table.lam, rem[~cross]))
        jumpers = todo[cross]
        if not jumpers.size:
            return
        tj = solve_jump_time(pop[:, cross], table.decay, r[jumpers], rem[cross])
        cj = coeffs[:, jumpers] * np.exp(-1j * np.outer(table.lam, tj))
        mu = streams.draw(jumpers)
        alpha = select_jump(channel_weights(cj, table), mu)
        coeffs[:, jumpers] = apply_jump_coeffs(cj, table, alpha)
        r[jumpers] = streams.draw(jumpers)
        elapsed[jumpers] += tj
        jump_counts[jumpers] += 1
        if log is not None:
            jt = table.jumps
            for i, tt, al in zip(jumpers, t0 + elapsed[jumpers], alpha):
                log.append((int(indices[i]), float(tt), int(al), int(jt.a[al]), int(jt.b[al]), float(jt.omega[al])))
        todo = jumpers
        first = False
