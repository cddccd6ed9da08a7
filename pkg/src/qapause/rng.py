"""Counter-based random streams, one per trajectory.

Draw j of stream i is a pure function of (master seed, i, j), so trajectories
can be simulated in any batch layout or order and still see the same numbers.
The mixing function is SplitMix64, evaluated with wrapping uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD1B54A32D192ED03)


def splitmix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def stream_keys(master_seed: int, indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        salted = splitmix64(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF)) ^ (idx * _STREAM_SALT)
    return splitmix64(salted)


def derive_seed(master_seed: int, *labels: int) -> int:
    """Child seed for a labelled sub-task, e.g. one sweep cell."""
    key = np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF)
    for lab in labels:
        key = stream_keys(int(key), [lab])[0]
    return int(key)


class TrajectoryStreams:
    """Independent uniform streams for a set of trajectory indices."""

    def __init__(self, master_seed: int, indices):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.keys = stream_keys(master_seed, self.indices)
        self.counters = np.zeros(len(self.indices), dtype=np.uint64)

    def draw(self, which=None) -> np.ndarray:
        """One uniform in the open interval (0, 1) for each selected stream."""
        sel = slice(None) if which is None else which
        with np.errstate(over="ignore"):
            bits = splitmix64(self.keys[sel] + self.counters[sel] * _GOLDEN)
        self.counters[sel] += np.uint64(1)
        return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
