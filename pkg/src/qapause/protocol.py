"""Anneal schedules in wall time: linear ramp with an optional mid-anneal pause."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PauseProtocol:
    """Ramp of duration tau, held at s_pause for pause_length ns.

    The pause starts at wall time s_pause * tau, so the anneal lasts
    tau + pause_length in total.
    """

    tau: float
    s_pause: float | None = None
    pause_length: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.pause_length < 0:
            raise ValueError("pause length must be non-negative")
        if self.s_pause is not None and not 0.0 <= self.s_pause <= 1.0:
            raise ValueError("pause point must lie in [0, 1]")
        if self.s_pause is None and self.pause_length > 0:
            raise ValueError("a pause length needs a pause point")

    @property
    def paused(self) -> bool:
        return self.s_pause is not None and self.pause_length > 0

    @property
    def total_time(self) -> float:
        return self.tau + (self.pause_length if self.paused else 0.0)

    @property
    def pause_window(self):
        if not self.paused:
            return None
        start = self.s_pause * self.tau
        return start, start + self.pause_length


def pause_map(t, protocol: PauseProtocol):
    """Dimensionless time s(t) for wall time t in [0, tau + l_p]."""
    t_arr = np.asarray(t, dtype=float)
    total = protocol.total_time
    if np.any(t_arr < 0) or np.any(t_arr > total * (1 + 1e-12)):
        raise ValueError(f"t outside [0, {total}]")
    tau = protocol.tau
    if not protocol.paused:
        s = t_arr / tau
    else:
        start, end = protocol.pause_window
        s = np.where(t_arr < start, t_arr / tau, np.where(t_arr < end, protocol.s_pause, (t_arr - protocol.pause_length) / tau))
    s = np.clip(s, 0.0, 1.0)
    return float(s) if s.ndim == 0 else s


@dataclass(frozen=True)
class Step:
    t0: float
    dt: float
    s: float  # schedule point used for the whole step
    hold: bool


def timeline(protocol: PauseProtocol, dt: float, sample_times):
    """Split the anneal into propagation steps.

    Ramp pieces are cut into equal steps of at most ``dt`` evaluated at their
    midpoint; the hold segment uses H(s_pause) exactly, one step per gap
    between sample times. Every sample time falls on a step boundary.
    Returns the steps and, for each sample, the number of steps preceding it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    total = protocol.total_time
    samples = np.asarray(sample_times, dtype=float)
    segments = []
    if protocol.paused:
        start, end = protocol.pause_window
        segments = [(0.0, start, False), (start, end, True), (end, total, False)]
    else:
        segments = [(0.0, total, False)]
    steps = []
    for lo, hi, hold in segments:
        if hi - lo <= 0:
            continue
        cuts = np.unique(np.concatenate([[lo, hi], samples[(samples > lo) & (samples < hi)]]))
        for a, b in zip(cuts[:-1], cuts[1:]):
            if hold:
                steps.append(Step(float(a), float(b - a), protocol.s_pause, True))
                continue
            k = max(1, math.ceil((b - a) / dt - 1e-9))
            edges = np.linspace(a, b, k + 1)
            mids = np.atleast_1d(pause_map(0.5 * (edges[:-1] + edges[1:]), protocol))
            for x, y, s in zip(edges[:-1].tolist(), edges[1:].tolist(), mids.tolist()):
                steps.append(Step(x, y - x, s, False))
    ends = np.array([st.t0 + st.dt for st in steps])
    marks = []
    for t in samples:
        if t <= 0:
            marks.append(0)
            continue
        k = int(np.argmin(np.abs(ends - t)))
        if abs(ends[k] - t) > 1e-9 * max(total, 1.0):
            raise AssertionError("sample time not aligned with a step boundary")
        marks.append(k + 1)
    return steps, marks
