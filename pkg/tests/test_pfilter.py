import numpy as np
import pytest

from pfctrl.errors import NotPE
from pfctrl.gains import Constant, Sinusoid, WindowedBump, bump_schedule
from pfctrl.pfilter import (PersistenceFilter, adaptive_lambda_rhs, filter_bounds_estimate, filter_samples,
                            k_exponent, simulate_filter)

from conftest import periodic_minimum


@pytest.mark.parametrize("r, k", [(1, 2), (2, 2), (3, 4), (4, 4), (5, 8), (8, 8), (9, 16)])
def test_k_exponent(r, k):
    assert k_exponent(r) == k


def test_constant_gain_closed_form():
    lam, g, R0 = 1.5, 0.8, 2.0
    traj = simulate_filter(Constant(g), lam, 2, 5.0, 1e-2, R0)
    ss = g ** 2 / lam
    exact = ss + (R0 - ss) * np.exp(-lam * traj.times)
    np.testing.assert_allclose(traj.states[:, 0], exact, atol=1e-9)


def test_sinusoid_closed_form():
    # sin^2 = (1 - cos 2t) / 2
    lam, R0 = 2.0, 1.0
    traj = simulate_filter(Sinusoid(), lam, 2, 10.0, 1e-3, R0)
    t = traj.times

    def particular(t):
        return 1 / (2 * lam) - (lam * np.cos(2 * t) + 2 * np.sin(2 * t)) / (2 * (lam ** 2 + 4))

    exact = particular(t) + (R0 - particular(0.0)) * np.exp(-lam * t)
    np.testing.assert_allclose(traj.states[:, 0], exact, atol=1e-6)


def test_bump_filter_lower_bound_matches_fixed_point():
    g1, _ = bump_schedule()
    lo, hi = filter_bounds_estimate(g1, 2.0, 2, 100.0, 1e-3)
    assert lo == pytest.approx(periodic_minimum(g1, 2.0, 2, 4.0), rel=1e-4)
    assert hi > lo > 0


def test_zero_gain_is_not_pe():
    with pytest.raises(NotPE):
        filter_bounds_estimate(Constant(0.0), 1.0, 2, 20.0)


def test_filter_stays_positive_through_outage():
    sig = WindowedBump(0.0, 1.0, 6.0)
    traj = simulate_filter(sig, 3.0, 4, 30.0, 1e-2)
    assert traj.states[:, 0].min() > 0


def test_adaptive_rate_nonnegative_and_ceiling():
    assert adaptive_lambda_rhs(0.1, 2.0, np.array([1.0, -2.0])) == pytest.approx(1.0)
    with pytest.warns(RuntimeWarning):
        assert adaptive_lambda_rhs(0.1, 2.0, np.ones(2), lam=5.0, ceiling=5.0) == 0.0


def test_filter_config_validation():
    with pytest.raises(ValueError):
        PersistenceFilter(lam=1.0, R0=0.0)
    with pytest.raises(ValueError):
        PersistenceFilter(lam=1.0, adaptive=True)
    PersistenceFilter(lam=1.0, adaptive=True, nu=0.1)


def test_exact_stepping_agrees_with_runge_kutta():
    sig = Sinusoid(1.0, 1.7, 0.3)
    times, R = filter_samples(sig, 1.2, 4, 8.0, 1e-2, 0.5)
    traj = simulate_filter(sig, 1.2, 4, 8.0, 1e-2, 0.5)
    np.testing.assert_allclose(times, traj.times)
    np.testing.assert_allclose(R, traj.states[:, 0], atol=1e-8)
