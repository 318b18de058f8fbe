"""Full-state observer for multi-output plants with singular measurement gains.

Measurements are ``y_i = g_i(t) c_i x``.  In the coordinates
``z = T^-T x``, where ``T`` is the canonical transform of ``(A^T, C^T)``,
the error dynamics are block lower-triangular and each diagonal block is a
single-output system ``e' = A_i e - eta``, ``y_tilde = g e_r``.

Two per-block innovations are available.

``"information"`` (default)
    A matrix persistence filter ``S' = -lam S - A_i^T S - S A_i + g^2 e_r e_r^T``
    with ``eta = S^-1 e_r g y_tilde``.  Along the error, ``V = e^T S e``
    obeys ``V' = -lam V - g^2 e_r^2``.  For ``r = 1`` and ``A_i = 0`` this is
    the scalar filter ``R' = -lam R + g^2``.
``"dual"``
    The transpose of the single-input control law: if ``u = K(t) xi``
    stabilises ``xi' = A_i^T xi + e_r g u`` then ``eta = -K(t)^T y_tilde``.
    Exact for constant gains; time-varying gains can destabilise it because
    the transpose of a stable time-varying system need not be stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import PersistenceController, select_lambdas
from .errors import NotControllable, NotObservable
from .lti_model import (DEFAULT_RANK_TOL, CanonicalData, PlantModel, canonical_from_coefficients,
                        canonical_transform)
from .pfilter import filter_rhs
from .simulator import integrate

DESIGNS = ("information", "dual")


@dataclass
class InformationContext:
    """Matrix persistence filter for one single-output block."""

    A_block: np.ndarray
    gain: object
    lam: float
    S0: float = 1.0

    @property
    def r(self):
        return self.A_block.shape[0]

    @property
    def size(self):
        return self.r * self.r

    def initial(self):
        return (self.S0 * np.eye(self.r)).ravel()

    def gain_value(self, t):
        return float(self.gain.eval(t, 0))

    def innovation(self, y_tilde, t, s):
        S = s.reshape(self.r, self.r)
        rhs = np.zeros(self.r)
        rhs[-1] = self.gain_value(t) * float(y_tilde)
        return np.linalg.solve(S, rhs)

    def filter_rhs(self, t, s):
        S = s.reshape(self.r, self.r)
        g = self.gain_value(t)
        dS = -self.lam * S - self.A_block.T @ S - S @ self.A_block
        dS[-1, -1] += g * g
        return (0.5 * (dS + dS.T)).ravel()


@dataclass
class DualContext:
    """Transposed persistence-filter control law for one block."""

    ctrl: PersistenceController
    R0: float = 1.0

    @property
    def size(self):
        return 1

    def initial(self):
        return np.array([self.R0])

    def gain_value(self, t):
        return float(self.ctrl.block_gains[0].eval(t, 0))

    def innovation(self, y_tilde, t, s):
        K = self.ctrl.feedback_row(1, t, float(s[0]))
        return -K * float(y_tilde)

    def filter_rhs(self, t, s):
        g = self.gain_value(t)
        return np.array([filter_rhs(s[0], g, self.ctrl.config.lambdas[0], self.ctrl.k)])


@dataclass
class ObserverData:
    """Dual canonical data plus one innovation context per block.

    Attributes
    ----------
    T : ndarray
        Canonical transform of ``(A^T, C^T)``; observer coordinates are
        ``z = T^-T x``.
    A_o, C_o : ndarray
        ``A_hat^T`` and ``B_hat^T``.  Output row ``outputs[i-1]`` of ``C``
        measures ``z^i_{r_i}``.
    contexts : list
        Innovation contexts, block ``i`` at index ``i - 1``.
    """

    A: np.ndarray
    C: np.ndarray
    cd: CanonicalData
    T: np.ndarray
    A_o: np.ndarray
    C_o: np.ndarray
    outputs: list
    contexts: list = field(default_factory=list)
    design: str = "information"

    @property
    def p(self):
        return self.cd.p

    @property
    def n(self):
        return self.A.shape[0]

    def block_A(self, i):
        """Diagonal block ``i`` of ``A_o`` rebuilt with exact zeros."""
        sl = self.cd.block_slice(i)
        return self.cd.structured_A()[sl, sl].T

    def filter_slices(self):
        out, o = [], self.n
        for ctx in self.contexts:
            out.append(slice(o, o + ctx.size))
            o += ctx.size
        return out

    def initial_filters(self):
        return np.concatenate([ctx.initial() for ctx in self.contexts])


def observer_transform(A, C, rank_tol=DEFAULT_RANK_TOL, gains=None, design="information",
                       lam=None, slack=0.5, S0=1.0):
    """Build the observer coordinates; with ``gains`` also the innovation contexts.

    ``gains`` lists one measurement gain per row of ``C``; rows beyond the
    block count are redundant and left unused.
    """
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    try:
        cd = canonical_transform(PlantModel(A.T, C.T), rank_tol)
    except NotControllable as exc:
        raise NotObservable(f"(A, C) is not observable: {exc}") from exc
    od = ObserverData(A, C, cd, cd.T, cd.A_hat.T, cd.B_hat.T, list(cd.inputs))
    if gains is not None:
        attach_gains(od, gains, design, lam, slack, S0)
    return od


def default_information_rate(A_block, floor=1.0):
    """Keeps ``S`` bounded: ``lam`` must exceed twice the fastest stable mode."""
    eig = np.linalg.eigvals(A_block).real
    return max(floor, floor + 2.0 * float(max(0.0, -eig.min())))


def attach_gains(od: ObserverData, gains, design="information", lam=None, slack=0.5, S0=1.0):
    if len(gains) != od.C.shape[0]:
        raise ValueError("need one gain per output")
    if design not in DESIGNS:
        raise ValueError(f"unknown observer design {design!r}")
    od.design = design
    od.contexts = []
    for i in range(1, od.p + 1):
        g = gains[od.outputs[i - 1]]
        if design == "information":
            Ab = od.block_A(i)
            rate = default_information_rate(Ab) if lam is None else float(np.broadcast_to(lam, (od.p,))[i - 1])
            od.contexts.append(InformationContext(Ab, g, rate, S0))
        else:
            nominal = canonical_from_coefficients([od.cd.r[i - 1]], [od.cd.alpha[i - 1]])
            plant = PlantModel(nominal.structured_A(), nominal.structured_B())
            ctrl = PersistenceController(plant, [g], config=select_lambdas(nominal, slack), cd=nominal)
            od.contexts.append(DualContext(ctrl, S0))
    return od


def innovation(i, y_tilde, t, od: ObserverData, filter_state):
    """Injection ``eta^i`` for block ``i`` from its scalar output error only."""
    return od.contexts[i - 1].innovation(y_tilde, t, filter_state)


def output_gains(od: ObserverData, t):
    return np.array([ctx.gain_value(t) for ctx in od.contexts])


def observer_rhs(state, u, y, t, od: ObserverData):
    """Derivative of ``[x_hat, filter states of blocks 1..p]``.

    ``u`` is the input contribution ``B u`` to the plant (zeros if
    autonomous) and ``y`` the full measurement vector.
    """
    n = od.n
    x_hat = state[:n]
    slices = od.filter_slices()
    g = output_gains(od, t)
    y_hat = od.C @ x_hat
    eta = np.zeros(n)
    dF = []
    # block 1 is uncoupled, so the cascade is processed upwards
    for i in range(1, od.p + 1):
        row = od.outputs[i - 1]
        fs = state[slices[i - 1]]
        y_tilde = y[row] - g[i - 1] * y_hat[row]
        eta[od.cd.block_slice(i)] = innovation(i, y_tilde, t, od, fs)
        dF.append(od.contexts[i - 1].filter_rhs(t, fs))
    dx = od.A @ x_hat + u + od.T.T @ eta
    return np.concatenate([dx, *dF])


def measure(od: ObserverData, x, t):
    """Full measurement vector ``y = G(t) C x`` (redundant rows ungained)."""
    g = np.ones(od.C.shape[0])
    for i, ctx in enumerate(od.contexts):
        g[od.outputs[i]] = ctx.gain_value(t)
    return g * (od.C @ x)


def filter_labels(od: ObserverData):
    labs = []
    for i, ctx in enumerate(od.contexts, start=1):
        labs += [f"S{i}_{k + 1}" for k in range(ctx.size)] if ctx.size > 1 else [f"R{i}"]
    return labs


def simulate_observer(od: ObserverData, x0, x_hat0, tf, dt=1e-3, input_fn=None, record_every=1):
    """Plant and observer side by side; state ``[x, x_hat, R]``."""
    n = od.n

    def rhs(t, s):
        x = s[:n]
        u = np.zeros(n) if input_fn is None else np.asarray(input_fn(t), dtype=float)
        y = measure(od, x, t)
        return np.concatenate([od.A @ x + u, observer_rhs(s[n:], u, y, t, od)])

    def out(t, s):
        return {"err": float(np.linalg.norm(s[:n] - s[n:2 * n]))}

    labels = ([f"x{i + 1}" for i in range(n)] + [f"xhat{i + 1}" for i in range(n)]
              + filter_labels(od))
    s0 = np.concatenate([np.asarray(x0, float), np.asarray(x_hat0, float), od.initial_filters()])
    return integrate(rhs, s0, 0.0, tf, dt, labels=labels, output=out, record_every=record_every)


def estimation_error_blocks(od: ObserverData, x, x_hat):
    """Error in observer coordinates, split per block."""
    zt = np.linalg.solve(od.T.T, np.asarray(x) - np.asarray(x_hat))
    return [zt[od.cd.block_slice(i)] for i in range(1, od.p + 1)]


@dataclass
class MeasurementReplay:
    """Linearly interpolated measurement record."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.array([np.interp(t, self.times, col) for col in self.values.T])


def read_measurements(path) -> MeasurementReplay:
    """Read a two-section measurement file.

    The first section is a single ``outputs <s>`` line; after a blank line
    every row is ``t y_1 ... y_s`` with increasing ``t``.
    """
    text = Path(path).read_text()
    head, sep, body = text.strip().partition("\n\n")
    parts = head.split()
    if not sep or len(parts) != 2 or parts[0] != "outputs":
        raise ValueError(f"{path}: expected an 'outputs <s>' header followed by a blank line")
    s = int(parts[1])
    data = np.loadtxt(body.splitlines(), ndmin=2)
    if data.shape[1] != s + 1:
        raise ValueError(f"{path}: rows need {s + 1} columns")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ValueError(f"{path}: times must increase")
    return MeasurementReplay(data[:, 0], data[:, 1:])


def write_measurements(path, times, values) -> Path:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    lines = [f"outputs {values.shape[1]}", ""]
    lines += [" ".join(repr(float(v)) for v in (t, *row)) for t, row in zip(times, values)]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def replay_observer(od: ObserverData, replay: MeasurementReplay, x_hat0, tf, dt=1e-3,
                    input_fn=None, record_every=1):
    """Run the observer alone against recorded measurements."""
    n = od.n

    def rhs(t, s):
        u = np.zeros(n) if input_fn is None else np.asarray(input_fn(t), dtype=float)
        return observer_rhs(s, u, replay(t), t, od)

    labels = [f"xhat{i + 1}" for i in range(n)] + filter_labels(od)
    s0 = np.concatenate([np.asarray(x_hat0, float), od.initial_filters()])
    return integrate(rhs, s0, 0.0, tf, dt, labels=labels, record_every=record_every)
