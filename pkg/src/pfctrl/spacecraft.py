"""Axi-symmetric spacecraft with two actuators, one of which reorients.

Axis 1 is driven through ``g1(t)``; axes 2 and 3 share the schedule
``g2(t)``, time-wise orthogonal to ``g1``.  The roll pair ``(q1, w1)`` is a
decoupled double integrator handled by the generic persistence-filter law;
the pitch/yaw pairs use an adaptive filter ``R2' = -lam2 R2 + g2^2`` whose
decay rate grows with ``gamma R2 |(q2, q3, Omega2, Omega3)|^2``.

The laws are designed on the linearised kinematics ``qv' = w / 2`` and are
simulated against the full quaternion kinematics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import PersistenceController, config_with_lambdas
from .gains import GainSignal, bump_schedule
from .lti_model import PlantModel, canonical_transform
from .simulator import integrate

LABELS = ["q0", "q1", "q2", "q3", "w1", "w2", "w3", "R1", "R2", "lam2"]


def _default_schedule():
    return bump_schedule(1.8, 0.4, 1.8, 4.0)


@dataclass
class SpacecraftParams:
    """Inertias (kg m^2), schedules and tuning.

    ``third_axis_unity`` replaces the ``g2`` gain on axis 3 by 1 (a dedicated
    actuator).
    """

    J1: float = 3.0
    J2: float = 2.0
    J3: float = 2.0
    g1: GainSignal = field(default_factory=lambda: _default_schedule()[0])
    g2: GainSignal = field(default_factory=lambda: _default_schedule()[1])
    lam1: float = 2.0
    gamma: float = 0.01
    third_axis_unity: bool = False

    def __post_init__(self):
        if min(self.J1, self.J2, self.J3) <= 0:
            raise ValueError("inertias must be positive")
        if not np.isclose(self.J2, self.J3):
            raise ValueError("axi-symmetry requires J2 == J3")

    @property
    def k2(self):
        return (self.J3 - self.J1) / self.J2

    @property
    def k3(self):
        return (self.J1 - self.J2) / self.J3


def axis_angle_quaternion(angle_deg, axis):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = np.deg2rad(angle_deg) / 2.0
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def reference_initial_state():
    """18 degree rotation about the diagonal, small body rates, unit filters."""
    q = axis_angle_quaternion(18.0, [1.0, 1.0, 1.0])
    w = 0.1 * np.array([np.pi / 12, -np.pi / 6, np.pi / 8])
    return np.concatenate([q, w, [1.0, 1.0, 2.0]])


class RollLaw:
    """Generic single-block law for ``q1' = w1 / 2``, ``w1' = g1 v1`` with ``k = 2``."""

    def __init__(self, g1: GainSignal, lam1: float):
        plant = PlantModel(np.array([[0.0, 0.5], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
        cd = canonical_transform(plant)
        self.ctrl = PersistenceController(plant, [g1], config=config_with_lambdas(cd, [lam1]),
                                          k=2, cd=cd)

    def __call__(self, q1, w1, R1, t):
        return float(self.ctrl.control(np.array([q1, w1]), t, np.array([R1]))[0])


_ROLL_LAWS: dict = {}


def control_v1(qv1, omega1, R1, g1, t, lam1=2.0):
    """Roll torque command; the law for each ``(g1, lam1)`` is built once."""
    key = (g1, lam1)
    if key not in _ROLL_LAWS:
        _ROLL_LAWS[key] = RollLaw(g1, lam1)
    return _ROLL_LAWS[key](qv1, omega1, R1, t)


def augmented_states(q2, q3, w2, w3, g, R):
    c = g * g / R
    return w2 + c * q2, w3 + c * q3


def control_v23(state, t, params: SpacecraftParams):
    """Returns ``(v2, v3, dlam2/dt)``.

    ``(1/g2) d/dt (g2^2 q / R2)`` is expanded with ``R2' = -lam2 R2 + g2^2``
    and ``q' = w / 2`` so that the division by ``g2`` is exact.
    """
    _, _, q2, q3, w1, w2, w3, _, R, lam = state
    g = float(params.g2.eval(t, 0))
    gd = float(params.g2.eval(t, 1))
    Om2, Om3 = augmented_states(q2, q3, w2, w3, g, R)

    def divided_derivative(q, w):
        return (2.0 * gd / R + g * lam / R - g ** 3 / R ** 2) * q + g * w / (2.0 * R)

    v2 = -g / (2 * R) * Om2 + params.k2 * g / R * w1 * q3 - divided_derivative(q2, w2)
    v3 = -g / (2 * R) * Om3 + params.k3 * g / R * w1 * q2 - divided_derivative(q3, w3)
    if params.third_axis_unity:
        v3 *= g
    dlam = params.gamma * R * (q2 * q2 + q3 * q3 + Om2 * Om2 + Om3 * Om3)
    return v2, v3, dlam


class SpacecraftModel:
    def __init__(self, params: SpacecraftParams | None = None):
        self.params = SpacecraftParams() if params is None else params
        self.roll = RollLaw(self.params.g1, self.params.lam1)

    def controls(self, state, t):
        """``(v1, v2, v3, dlam2)`` before the schedule gains are applied."""
        q1, w1, R1 = state[1], state[4], state[7]
        v1 = self.roll(q1, w1, R1, t)
        v2, v3, dlam = control_v23(state, t, self.params)
        return v1, v2, v3, dlam

    def torques(self, state, t):
        """Delivered torques ``J_i g_i(t) v_i`` in N m."""
        P = self.params
        v1, v2, v3, _ = self.controls(state, t)
        g1, g2 = float(P.g1.eval(t, 0)), float(P.g2.eval(t, 0))
        g3 = 1.0 if P.third_axis_unity else g2
        return np.array([P.J1 * g1 * v1, P.J2 * g2 * v2, P.J3 * g3 * v3])

    def rhs(self, t, state):
        return spacecraft_rhs(state, t, self.params, self)


def spacecraft_rhs(state, t, params: SpacecraftParams, control: SpacecraftModel):
    """True quaternion kinematics, Euler rate dynamics and the two filters."""
    q0, qv, w = state[0], state[1:4], state[4:7]
    R1, R2 = state[7], state[8]
    v1, v2, v3, dlam = control.controls(state, t)
    g1, g2 = float(params.g1.eval(t, 0)), float(params.g2.eval(t, 0))
    g3 = 1.0 if params.third_axis_unity else g2
    dq0 = -0.5 * float(qv @ w)
    dqv = 0.5 * q0 * w + 0.5 * np.cross(qv, w)
    dw = np.array([g1 * v1,
                   params.k2 * w[0] * w[2] + g2 * v2,
                   params.k3 * w[0] * w[1] + g3 * v3])
    lam2 = state[9]
    dR1 = -params.lam1 * R1 + g1 * g1
    dR2 = -lam2 * R2 + g2 * g2
    return np.concatenate([[dq0], dqv, dw, [dR1, dR2, dlam]])


def run_paper_scenario(horizon=200.0, dt=0.01, params: SpacecraftParams | None = None,
                       state0=None, record_every=1):
    """Simulate the stabilisation run; quaternion renormalised after every step.

    ``traj.meta["max_norm_violation"]`` holds the largest pre-renormalisation
    deviation of ``|q|`` from one.
    """
    model = SpacecraftModel(params)
    state0 = reference_initial_state() if state0 is None else np.asarray(state0, dtype=float)
    worst = [0.0]

    def renormalise(t, y):
        nq = float(np.linalg.norm(y[:4]))
        worst[0] = max(worst[0], abs(nq * nq - 1.0))
        y = y.copy()
        y[:4] /= nq
        return y

    def out(t, y):
        v1, v2, v3, _ = model.controls(y, t)
        return {"u": model.torques(y, t), "v": np.array([v1, v2, v3])}

    traj = integrate(model.rhs, state0, 0.0, horizon, dt, labels=LABELS, output=out,
                     post_step=renormalise, record_every=record_every)
    traj.meta.update(max_norm_violation=worst[0], J=(model.params.J1, model.params.J2,
                                                     model.params.J3),
                     lam1=model.params.lam1, gamma=model.params.gamma)
    return traj
