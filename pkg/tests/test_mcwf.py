import numpy as np
import pytest
from scipy import linalg

from qapause.bath import BathParams, LambShiftTable
from qapause.mcwf import (
    Simulation,
    apply_jump,
    apply_jump_coeffs,
    build_effective,
    channel_weights,
    effective_from_operators,
    find_jump_time,
    propagate_step,
    propagator,
    select_jump,
    simulate,
    solve_jump_time,
    split_blocks,
    step_table,
)
from qapause.protocol import PauseProtocol

BATH = BathParams(eta=1e-2)


@pytest.fixture(scope="module")
def table(linear_small):
    lamb = LambShiftTable(BATH, 30.0, points=801)
    return step_table(linear_small, 0.45, BATH, lamb), lamb


def test_heff_from_operators(table):
    tab, lamb = table
    np.testing.assert_allclose(build_effective(tab), effective_from_operators(tab, BATH, lamb), atol=1e-12)


def test_propagator_vs_expm(table):
    tab, _ = table
    for dt in (1e-3, 0.05, 1.3):
        ref = linalg.expm(-1j * build_effective(tab) * dt)
        np.testing.assert_allclose(propagator(tab, dt), ref, atol=1e-12)


def test_unitary_limit_conserves_norm(linear_small):
    tab = step_table(linear_small, 0.3)
    assert tab.jumps is None
    psi = np.ones(5, dtype=complex) / np.sqrt(5)
    for _ in range(50):
        psi = propagate_step(psi, tab, 0.1)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(ValueError):
        propagate_step(psi, tab, 0.0)


def test_norm_decreases(table):
    tab, _ = table
    psi = tab.vectors @ (np.ones(5) / np.sqrt(5))
    norms = [1.0]
    for _ in range(20):
        psi = propagate_step(psi, tab, 0.5)
        norms.append(np.linalg.norm(psi) ** 2)
    assert np.all(np.diff(norms) < 0)


def test_jump_time_closed_form():
    g, r = 0.7, 0.3
    t = solve_jump_time(np.array([[1.0]]), np.array([g]), np.array([r]), 100.0)
    assert t[0] == pytest.approx(-np.log(r) / g, rel=1e-11)


def test_jump_time_two_rates():
    pop = np.array([[0.4], [0.6]])
    decay = np.array([0.1, 2.0])
    r = np.array([0.5])
    t = solve_jump_time(pop, decay, r, 100.0)[0]
    assert (pop[:, 0] * np.exp(-decay * t)).sum() == pytest.approx(0.5, abs=1e-12)


def test_find_jump_time(table):
    tab, _ = table
    psi = tab.vectors[:, 2].astype(complex)
    rate = tab.decay[2]
    t, state = find_jump_time(psi, tab, 0.9, 100.0)
    assert t == pytest.approx(-np.log(0.9) / rate, rel=1e-10)
    assert np.linalg.norm(state) ** 2 == pytest.approx(0.9, abs=1e-12)
    none, _ = find_jump_time(psi, tab, 1e-300, 1e-3)
    assert none is None


def test_select_jump_cumulative():
    assert select_jump([1.0, 3.0], 0.2) == 0
    assert select_jump([1.0, 3.0], 0.3) == 1
    assert select_jump([0.0, 2.0, 0.0], 0.999999999) == 1
    assert list(select_jump(np.array([[1.0, 1.0], [3.0, 3.0]]), np.array([0.2, 0.3]))) == [0, 1]
    with pytest.raises(ValueError):
        select_jump([0.0, 0.0], 0.5)


def test_apply_jump(table):
    tab, _ = table
    jt = tab.jumps
    k = next(k for k in range(1, jt.channels) if jt.a[k] == 0 and jt.b[k] == 3)
    psi = tab.vectors @ np.array([0.6, 0, 0, 0.8, 0], dtype=complex)
    out = apply_jump(psi, tab, k)
    assert abs(tab.vectors[:, 0] @ out) == pytest.approx(1.0)
    deph = apply_jump_coeffs(np.array([0.6, 0, 0, 0.8, 0], complex), tab, 0)
    expect = np.array([0.6, 0, 0, 0.8, 0]) * np.diag(jt.matrix)
    np.testing.assert_allclose(np.abs(deph), np.abs(expect) / np.linalg.norm(expect))
    with pytest.raises(ValueError):
        apply_jump_coeffs(np.array([0, 1, 0, 0, 0], complex), tab, k)


def test_channel_weights_sum_to_decay(table):
    tab, _ = table
    c = np.array([0.3, 0.5, 0.1, 0.7, 0.2], complex)
    c /= np.linalg.norm(c)
    w = channel_weights(c, tab)
    assert w.sum() == pytest.approx(tab.decay @ np.abs(c) ** 2, rel=1e-12)


def test_split_blocks():
    parts = split_blocks(np.arange(7), 3)
    assert [list(p) for p in parts] == [[0, 1, 2], [3, 4, 5], [6]]
    assert len(split_blocks(np.arange(7), None)) == 1


def _sim(asm, **kw):
    args = dict(assembler=asm, protocol=PauseProtocol(10.0), bath=BATH, dt=0.02, samples=11, seed=3)
    args.update(kw)
    return Simulation(**args)


def test_unitary_simulation_trajectories_identical(linear_small):
    res = simulate(_sim(linear_small, bath=None), np.arange(4))
    assert np.all(res.jump_counts == 0)
    np.testing.assert_allclose(res.rho11, res.rho11[:1].repeat(4, 0), atol=0)
    assert res.rho11[0, 0] == pytest.approx(1.0)


def test_determinism_and_subsets(linear_small):
    sim = _sim(linear_small)
    a = simulate(sim, np.arange(12), block_size=4)
    b = simulate(sim, np.arange(12), block_size=4)
    np.testing.assert_array_equal(a.rho11, b.rho11)
    assert a.jump_counts.sum() > 0
    part = simulate(sim, np.arange(4, 8), block_size=4)
    np.testing.assert_array_equal(a.rho11[4:8], part.rho11)


def test_block_layout_nearly_invariant(linear_small):
    sim = _sim(linear_small)
    a = simulate(sim, np.arange(12), block_size=4)
    c = simulate(sim, np.arange(12), block_size=12)
    np.testing.assert_array_equal(a.jump_counts, c.jump_counts)
    np.testing.assert_allclose(a.rho11, c.rho11, atol=1e-9)


def test_final_state_normalised(linear_small):
    res = simulate(_sim(linear_small, record_jumps=True), np.arange(6))
    np.testing.assert_allclose(np.linalg.norm(res.final_states, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(res.final_eig_pop.sum(axis=1), 1.0, atol=1e-12)
    assert len(res.jump_log) == res.jump_counts.sum()
    for idx, t, alpha, a, b, w in res.jump_log:
        assert 0 <= t <= 10.0 and 0 <= idx < 6
