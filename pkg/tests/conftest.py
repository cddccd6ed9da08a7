import itertools
from math import comb

import numpy as np
import pytest

from qapause.spectral import Assembler
from qapause.spin_model import build_problem, build_sector, linear_schedule, load_schedule


def dicke_projector(n):
    """Columns |w> = sum over bitstrings with w ones / sqrt(C(n, w)), bit 1 = spin down."""
    basis = np.zeros((2**n, n + 1))
    for idx in range(2**n):
        w = bin(idx).count("1")
        basis[idx, w] = 1.0
    return basis / np.sqrt([comb(n, w) for w in range(n + 1)])


def full_collective(n):
    """sum_i sigma^x_i, sum_i sigma^z_i on the 2^n space (bit 1 = down, sigma^z = -1)."""
    dim = 2**n
    sx = np.zeros((dim, dim))
    sz = np.zeros(dim)
    for idx in range(dim):
        for q in range(n):
            sx[idx ^ (1 << q), idx] += 1.0
            sz[idx] += -1.0 if idx >> q & 1 else 1.0
    return sx, np.diag(sz)


@pytest.fixture(scope="session")
def paper_pspin():
    return Assembler(build_sector(20), build_problem("p-spin", 20, 19), load_schedule())


@pytest.fixture(scope="session")
def paper_search():
    return Assembler(build_sector(20), build_problem("search", 20), load_schedule())


@pytest.fixture(scope="session")
def small_pspin():
    return Assembler(build_sector(4), build_problem("p-spin", 4, 3), load_schedule())


@pytest.fixture(scope="session")
def linear_small():
    return Assembler(build_sector(4), build_problem("p-spin", 4, 3), linear_schedule())


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
