import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from pfctrl.errors import BadSchedule, OrderUnavailable
from pfctrl.gains import (Constant, PESpec, Sinusoid, TabulatedSpline, WindowedBump, bump_schedule,
                          check_pe, make_gain, mollifier_bump)


def central_difference(f, t, h=1e-5):
    return (f(t + h) - f(t - h)) / (2 * h)


@pytest.mark.parametrize("sig, orders", [
    (Sinusoid(1.3, 2.0, 0.4, 0.1), 4),
    (WindowedBump(0.5, 1.8, 4.0, 1.0, "cosine"), 1),
    (WindowedBump(0.0, 2.0, 5.0, 0.7, "mollifier"), 4),
])
def test_derivatives_match_finite_differences(sig, orders):
    ts = np.linspace(0.05, 7.9, 41)
    for d in range(orders):
        num = central_difference(lambda s: sig.eval(s, d), ts)
        np.testing.assert_allclose(sig.eval(ts, d + 1), num, atol=2e-5 * 10 ** d)


def test_cosine_bump_is_only_c1():
    sig = WindowedBump(0.0, 1.8, 4.0)
    sig.eval(0.3, 1)
    with pytest.raises(OrderUnavailable):
        sig.eval(0.3, 2)


def test_cosine_bump_peak_and_support():
    sig = WindowedBump(1.0, 2.0, 5.0)
    assert sig.eval(2.0) == pytest.approx(2.0)
    assert sig.eval(0.5) == 0.0 and sig.eval(3.5) == 0.0
    assert sig.eval(7.0) == pytest.approx(2.0)
    assert bool(sig.support(2.0)) and not bool(sig.support(4.0))


def test_mollifier_peak_is_amplitude():
    assert mollifier_bump(0.0) == pytest.approx(1.0)
    assert mollifier_bump(1.0) == 0.0


def test_bump_schedule_defaults_are_orthogonal():
    g1, g2 = bump_schedule()
    t = np.linspace(0, 40, 40001)
    assert np.all(g1.eval(t) * g2.eval(t) == 0.0)
    # 0.4 s with no actuation at all
    gap = (t % 4 > 1.8) & (t % 4 < 2.2)
    assert np.all(g1.eval(t[gap]) == 0.0) and np.all(g2.eval(t[gap]) == 0.0)


def test_bump_schedule_rejects_overlap():
    with pytest.raises(BadSchedule):
        bump_schedule(2.0, 0.5, 2.0, 4.0)
    with pytest.raises(BadSchedule):
        bump_schedule(1.0, -0.1, 1.0, 4.0)


def test_windowed_energy_sinusoid():
    # any window of length 2 pi carries int sin^2 = pi
    ok, eps = check_pe(Sinusoid(), PESpec(2 * np.pi))
    assert ok and eps == pytest.approx(np.pi, rel=1e-6)


def test_windowed_energy_bump():
    g1, _ = bump_schedule()
    exact = quad(lambda t: g1.eval(t) ** 2, 0.0, 1.8)[0]
    assert exact == pytest.approx(2.7)
    ok, eps = check_pe(g1, PESpec(4.0))
    assert ok and eps == pytest.approx(exact, rel=1e-6)


def test_short_window_is_not_pe():
    g1, _ = bump_schedule()
    ok, eps = check_pe(g1, PESpec(2.0, grid_dt=0.01))
    assert not ok and eps == 0.0


def test_constant_gain():
    c = Constant(2.5)
    assert c.eval(3.0) == 2.5 and c.eval(3.0, 3) == 0.0
    np.testing.assert_array_equal(c.eval(np.zeros(3)), [2.5, 2.5, 2.5])


def test_tabulated_spline_reproduces_linear_data(tmp_path):
    t = np.linspace(0, 4, 9)
    path = tmp_path / "g.txt"
    np.savetxt(path, np.column_stack([t, 0.5 + 2 * t]))
    sig = TabulatedSpline.from_file(path)
    assert sig.eval(1.37) == pytest.approx(0.5 + 2 * 1.37)
    assert sig.eval(1.37, 1) == pytest.approx(2.0)
    with pytest.raises(OrderUnavailable):
        sig.eval(1.0, 3)


def test_make_gain_kinds():
    assert isinstance(make_gain("sinusoid", amplitude="2"), Sinusoid)
    b = make_gain("bump-schedule", start="0", width="1.8", period="4")
    assert b.shape == "cosine"
    m = make_gain("smooth-mollifier-schedule", start="0", width="1.8", period="4")
    assert m.max_smooth_order > 10
    with pytest.raises(ValueError):
        make_gain("square-wave")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 100.0), st.integers(0, 3))
def test_bump_is_periodic(t, order):
    sig = WindowedBump(0.3, 1.5, 3.0, 1.0, "mollifier")
    assert sig.eval(t, order) == pytest.approx(sig.eval(t + 3.0, order), abs=1e-6)
