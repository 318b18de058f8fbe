import numpy as np
import pytest

from pfctrl.controller import (AdaptiveController, ControllerConfig, PersistenceController,
                               config_with_lambdas, control_adaptive, control_theorem1,
                               coupling_requirements, lambda_star_expanded, lambda_star_printed,
                               select_lambdas, sigma_estimate)
from pfctrl.errors import NonPositiveRate
from pfctrl.gains import Sinusoid, bump_schedule
from pfctrl.lti_model import PlantModel, canonical_from_coefficients
from pfctrl.simulator import fit_decay_rate, lyapunov_trace

from conftest import TWO_BLOCK_A, TWO_BLOCK_B, hidden_plant


def test_threshold_double_integrator():
    assert lambda_star_printed([0.0, 0.0], 2) == 1.0
    assert lambda_star_expanded([0.0, 0.0], 2) == 1.0


def test_threshold_third_order_by_hand():
    a = [0.5, -2.0, 1.5]  # a_1, a_2, a_3
    # printed: max{1 + |a3|, 2 + |a2|, 1 - a1 + |a3| + |a2|}
    assert lambda_star_printed(a, 3) == pytest.approx(max(2.5, 4.0, 1 - 0.5 + 1.5 + 2.0))
    # expanded: last term uses -2 a1
    assert lambda_star_expanded(a, 3) == pytest.approx(max(2.5, 4.0, 1 - 1.0 + 1.5 + 2.0))


def test_threshold_scalar_block():
    assert lambda_star_expanded([-1.0], 1) == 2.0
    assert lambda_star_printed([-1.0], 1) == 2.0


def test_select_lambdas_meets_margins():
    cd = canonical_from_coefficients([2, 2, 1], [[0.3, -1], [0.0, 0.2], [0.4]],
                                     {(1, 2): [1.0, 0.5], (1, 3): [0.2, 0.1], (2, 3): [0.7, 0.0]})
    cfg = select_lambdas(cd, slack=0.25)
    for g, m in zip(cfg.gamma, cfg.margins):
        assert g == pytest.approx(m + 0.25)
    assert cfg.margins == pytest.approx(coupling_requirements(cd))
    # middle block carries twice the upstream coupling
    assert cfg.margins[1] == pytest.approx(np.hypot(0.7, 0.0) + 2 * np.hypot(1.0, 0.5))
    assert cfg.sigma > 0


def test_sigma_single_block_is_gamma():
    cd = canonical_from_coefficients([2], [[0.0, 0.0]])
    cfg = select_lambdas(cd, 0.7)
    assert cfg.sigma == pytest.approx(0.7)


def test_sigma_two_blocks_by_hand():
    cd = canonical_from_coefficients([1, 1], [[0.0], [0.0]], {(1, 2): [3.0]})
    cfg = ControllerConfig([0, 0], [0, 0], [4.0, 5.0], [0, 0])
    assert sigma_estimate(cfg, cd) == pytest.approx(min(5.0 / 2, 4.0 - 3.0))


def test_nonpositive_rate_raises():
    cd = canonical_from_coefficients([1, 1], [[0.0], [0.0]], {(1, 2): [3.0]})
    with pytest.raises(NonPositiveRate):
        sigma_estimate(ControllerConfig([0, 0], [0, 0], [1.0, 5.0], [0, 0]), cd)


def test_user_lambdas_below_threshold_are_uncertified():
    cd = canonical_from_coefficients([2], [[0.0, 0.0]])
    assert config_with_lambdas(cd, [0.5]).sigma is None
    assert config_with_lambdas(cd, [2.0]).sigma == pytest.approx(1.0)


def test_zero_state_gives_zero_control():
    ctrl = PersistenceController(PlantModel(TWO_BLOCK_A, TWO_BLOCK_B), [Sinusoid(), Sinusoid()])
    np.testing.assert_array_equal(ctrl.control(np.zeros(4), 0.3, np.ones(2)), 0.0)
    assert np.all(control_theorem1(np.zeros(4), 1.0, ctrl, np.ones(2)) == 0.0)


def test_control_vanishes_in_outage():
    g1, g2 = bump_schedule()
    ctrl = PersistenceController(PlantModel(TWO_BLOCK_A, TWO_BLOCK_B), [g1, g2])
    u = ctrl.control(np.array([1.0, -2.0, 0.5, 3.0]), 2.0, np.array([0.01, 0.2]))
    np.testing.assert_array_equal(u, 0.0)


def test_feedback_row_matches_block_controls(rng):
    cd = canonical_from_coefficients([3], [[0.2, -0.4, 0.1]])
    plant = PlantModel(cd.structured_A(), cd.structured_B())
    ctrl = PersistenceController(plant, [Sinusoid()], cd=cd)
    z = rng.normal(size=3)
    row = ctrl.feedback_row(1, 0.8, 0.6)
    assert row @ z == pytest.approx(ctrl.block_controls(z, 0.8, np.array([0.6]))[0])


def test_redundant_input_is_pinned_to_zero():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0, 0.0], [1.0, 2.0]])
    ctrl = PersistenceController(PlantModel(A, B), [Sinusoid(), Sinusoid(phase=0.5)])
    u = ctrl.control(np.array([1.0, 1.0]), 0.4, np.ones(1))
    assert u[1] == 0.0 and u[0] != 0.0


def closed_loop_rate(plant, gains, x0, tf=30.0, dt=5e-3):
    ctrl = PersistenceController(plant, gains)
    traj = ctrl.simulate(x0, tf, dt, record_every=5)
    nx = np.linalg.norm(traj.states[:, :plant.n], axis=1)
    return ctrl, traj, fit_decay_rate(traj.times, nx)[0]


def test_double_integrator_decays():
    plant = PlantModel(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
    ctrl, traj, rate = closed_loop_rate(plant, [Sinusoid()], [1.0, 0.0])
    assert rate > 0.375 * ctrl.config.sigma


def test_hidden_plant_with_downstream_control_decays(rng):
    truth = canonical_from_coefficients([3, 1], [[0.1, -0.2, 0.3], [-0.5]],
                                        {(1, 2): [1.0, 0.5, 0.2]})
    plant = hidden_plant(rng, truth)
    ctrl, traj, rate = closed_loop_rate(plant, [Sinusoid(), Sinusoid(1.0, 1.3, 0.7)],
                                        rng.normal(size=4), tf=40.0)
    assert ctrl.cd.r == [3, 1] and ctrl.k == 4
    assert rate > 0.375 * ctrl.config.sigma
    assert np.isfinite(traj.outputs["u"]).all()


def test_lyapunov_function_decreases_on_two_block_plant():
    plant = PlantModel(TWO_BLOCK_A, TWO_BLOCK_B)
    ctrl, traj, _ = closed_loop_rate(plant, [Sinusoid(), Sinusoid(phase=1.0)],
                                     [1.0, -1.0, 1.0, 0.5], tf=20.0)
    t, V, _ = lyapunov_trace(traj, ctrl)
    assert np.all(V[1:] <= V[:-1] * np.exp(-ctrl.config.sigma * np.diff(t)) * (1 + 1e-3))


def test_adaptive_scalar_plant():
    cd = canonical_from_coefficients([1], [[-1.0]])
    ac = AdaptiveController(cd, [Sinusoid()], nu=0.5, eta=0.5, lam0=1.0)
    traj = ac.simulate([1.0], 60.0, 1e-2, record_every=10)
    lam = traj.column("lam1")
    assert np.all(np.diff(lam) >= 0)
    # the frozen closed loop is stable once lam exceeds -2 alpha_1 = 2
    assert lam[-1] > 2.0
    assert abs(traj.states[-1, 0]) < 1e-6


def test_adaptive_updates_from_helper():
    cd = canonical_from_coefficients([2], [[-1.0, -0.5]])
    ac = AdaptiveController(cd, [Sinusoid()], nu=0.5, eta=0.5)
    u, dalpha, dlam = control_adaptive(np.array([1.0, 0.5]), 0.7, ac,
                                       (np.ones(1), np.ones(1), [np.zeros(2)]))
    assert dlam[0] > 0 and dalpha[0][1] == 0.0
    assert np.isfinite(u).all()
