"""Fixed-step RK4 integration, trajectory records and closed-loop diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateFit, NonFiniteState

DEFAULT_DT = 1e-3


@dataclass
class Trajectory:
    """Uniformly sampled record of a simulation.

    ``states[i]`` is the full composite state at ``times[i]``.  ``outputs``
    holds per-sample quantities (controls, diagnostics) keyed by name.
    """

    times: np.ndarray
    states: np.ndarray
    labels: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def column(self, label: str) -> np.ndarray:
        if label in self.outputs:
            return self.outputs[label]
        return self.states[:, self.labels.index(label)]

    def select(self, prefix: str) -> np.ndarray:
        """All state columns whose label starts with ``prefix`` (in order)."""
        idx = [i for i, lab in enumerate(self.labels) if lab.startswith(prefix)]
        return self.states[:, idx]


def rk4_step(rhs, t, y, dt):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(rhs, state0, t0, tf, dt=DEFAULT_DT, *, labels=None, output=None,
              post_step=None, record_every=1) -> Trajectory:
    """Classical fourth-order Runge-Kutta with a fixed step.

    Parameters
    ----------
    rhs : callable ``(t, y) -> dy/dt``
    output : callable ``(t, y) -> dict`` evaluated at every recorded sample.
    post_step : callable ``(t, y) -> y`` applied after each step (e.g. a
        projection); the value it returns continues the integration.
    record_every : int
        Keep every ``record_every``-th sample (the first and last are kept).

    Raises
    ------
    NonFiniteState
        On the first step producing a NaN or infinity.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    nsteps = int(round((tf - t0) / dt))
    if nsteps < 0:
        raise ValueError("tf must not precede t0")
    y = np.array(state0, dtype=float)
    keep = list(range(0, nsteps + 1, record_every))
    if keep[-1] != nsteps:
        keep.append(nsteps)
    times = t0 + dt * np.asarray(keep, dtype=float)
    states = np.empty((len(keep), y.size))
    outs: dict[str, list] = {}

    def record(slot, t, y):
        states[slot] = y
        if output is not None:
            for key, val in output(t, y).items():
                outs.setdefault(key, []).append(val)

    _check_finite(t0, y)
    record(0, t0, y)
    slot = 1
    for step in range(1, nsteps + 1):
        t = t0 + (step - 1) * dt
        y = rk4_step(rhs, t, y, dt)
        if post_step is not None:
            y = post_step(t + dt, y)
        _check_finite(t + dt, y)
        if slot < len(keep) and keep[slot] == step:
            record(slot, t0 + step * dt, y)
            slot += 1
    traj = Trajectory(times, states, list(labels) if labels else [],
                      {k: np.asarray(v) for k, v in outs.items()})
    return traj


def _check_finite(t, y):
    bad = ~np.isfinite(y)
    if bad.any():
        raise NonFiniteState(t, int(np.flatnonzero(bad)[0]))


def fit_decay_rate(times, norms, tail_fraction=0.5, floor=1e-280):
    """Least-squares exponential rate over the final ``tail_fraction`` of samples.

    Returns ``(rate, r2)`` where ``rate = -slope`` of ``log(norm)`` versus time.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    start = times[0] + (1.0 - tail_fraction) * (times[-1] - times[0])
    mask = (times >= start) & (norms > floor)
    if mask.sum() < 10:
        raise DegenerateFit(f"only {int(mask.sum())} usable samples in the tail")
    tt, ll = times[mask], np.log(norms[mask])
    slope, icpt = np.polyfit(tt, ll, 1)
    resid = ll - (slope * tt + icpt)
    ss_tot = float(np.sum((ll - ll.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return -float(slope), r2


def amalgamate_lyapunov(vo: np.ndarray, rmin, rmax) -> np.ndarray:
    """Combine per-block energies ``V_j = R_j |Omega^j|^2`` into ``V_[p,1]``.

    ``vo[..., j-1]`` is the energy of block ``j``.  The top block enters with
    weight ``2 R_{p-1,max} / R_{p,min}``; every further block ``p-j`` wraps the
    running sum with ``R_{p-j,max} / R_{p-j+1,min}``.
    """
    vo = np.asarray(vo, dtype=float)
    p = vo.shape[-1]
    if p == 1:
        return vo[..., 0]
    w = vo[..., p - 2] + 2.0 * rmax[p - 2] / rmin[p - 1] * vo[..., p - 1]
    for j in range(2, p):
        b = p - j  # block number
        w = vo[..., b - 1] + rmax[b - 1] / rmin[b] * w
    return w


def lyapunov_trace(traj: Trajectory, ctx, bounds=None):
    """Evaluate the block energies and the amalgamated Lyapunov function.

    Parameters
    ----------
    ctx
        Any object with ``omega_blocks(state, t) -> list of Omega^j`` and
        ``filter_values(state) -> R`` (e.g. :class:`~pfctrl.controller.PersistenceController`).
    bounds : (rmin, rmax), optional
        Filter bounds; defaults to the extrema observed along ``traj``.

    Returns
    -------
    times, V, Vo
        ``Vo[:, j-1]`` is the energy of block ``j``.
    """
    R = np.array([ctx.filter_values(y) for y in traj.states])
    if bounds is None:
        rmin, rmax = R.min(axis=0), R.max(axis=0)
    else:
        rmin, rmax = (np.atleast_1d(np.asarray(b, dtype=float)) for b in bounds)
    vo = np.empty_like(R)
    for i, (t, y) in enumerate(zip(traj.times, traj.states)):
        blocks = ctx.omega_blocks(y, t)
        vo[i] = [R[i, j] * float(np.dot(b, b)) for j, b in enumerate(blocks)]
    return traj.times, amalgamate_lyapunov(vo, rmin, rmax), vo


def write_csv(traj: Trajectory, path, extra: dict | None = None) -> Path:
    """Write ``t``, every state column and every 1-D/2-D output column."""
    path = Path(path)
    cols = {"t": traj.times}
    for i, lab in enumerate(traj.labels or [f"s{i + 1}" for i in range(traj.states.shape[1])]):
        cols[lab] = traj.states[:, i]
    for key, val in {**traj.outputs, **(extra or {})}.items():
        val = np.asarray(val)
        if val.ndim == 1:
            cols[key] = val
        else:
            for c in range(val.shape[1]):
                cols[f"{key}{c + 1}"] = val[:, c]
    names = list(cols)
    data = np.column_stack([np.asarray(cols[k], dtype=float) for k in names])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
    return path


def write_manifest(path, entries: dict) -> Path:
    path = Path(path)
    lines = [f"{k} = {v}" for k, v in entries.items()]
    path.write_text("\n".join(lines) + "\n")
    return path
