import numpy as np
import pytest

from qapause.protocol import PauseProtocol, pause_map, timeline


def test_pause_map_examples():
    p = PauseProtocol(100.0, 0.5, 50.0)
    assert pause_map(25.0, p) == 0.25
    assert pause_map(75.0, p) == 0.5
    assert pause_map(125.0, p) == 0.75
    assert pause_map(150.0, p) == 1.0
    assert p.total_time == 150.0
    assert p.pause_window == (50.0, 100.0)


def test_pause_map_monotone_and_continuous():
    p = PauseProtocol(10.0, 0.37, 4.0)
    t = np.linspace(0, p.total_time, 2001)
    s = pause_map(t, p)
    assert np.all(np.diff(s) >= 0)
    assert np.abs(np.diff(s)).max() < 2 * (t[1] - t[0]) / 10.0


def test_no_pause():
    p = PauseProtocol(10.0)
    assert not p.paused and p.pause_window is None
    assert pause_map(4.0, p) == 0.4
    assert PauseProtocol(10.0, 0.5, 0.0).total_time == 10.0


@pytest.mark.parametrize("kw", [dict(tau=0), dict(tau=1, pause_length=-1), dict(tau=1, s_pause=1.5), dict(tau=1, pause_length=2)])
def test_protocol_errors(kw):
    with pytest.raises(ValueError):
        PauseProtocol(**kw)


def test_pause_map_range():
    with pytest.raises(ValueError):
        pause_map(11.0, PauseProtocol(10.0))


def test_timeline_covers_and_aligns():
    p = PauseProtocol(10.0, 0.3, 5.0)
    samples = np.linspace(0, p.total_time, 16)
    steps, marks = timeline(p, 0.07, samples)
    ends = np.cumsum([st.dt for st in steps])
    assert ends[-1] == pytest.approx(15.0)
    assert all(st.dt <= 0.07 + 1e-12 for st in steps if not st.hold)
    for t, m in zip(samples, marks):
        assert (ends[m - 1] if m else 0.0) == pytest.approx(t, abs=1e-9)
    holds = [st for st in steps if st.hold]
    assert sum(st.dt for st in holds) == pytest.approx(5.0)
    assert all(st.s == 0.3 for st in holds)


def test_timeline_midpoints():
    steps, _ = timeline(PauseProtocol(1.0), 0.25, [0.0, 1.0])
    assert [st.s for st in steps] == pytest.approx([0.125, 0.375, 0.625, 0.875])
    with pytest.raises(ValueError):
        timeline(PauseProtocol(1.0), 0.0, [1.0])
