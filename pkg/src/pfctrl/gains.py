"""Time-varying scalar gains with exact derivatives, and a PE checker.

Every signal exposes ``eval(t, order)`` returning the ``order``-th time
derivative from closed-form expressions.  ``t`` may be a scalar or an array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import BadSchedule, OrderUnavailable

SMOOTH = 64  # order cap reported by analytic (C-infinity) signals


class GainSignal:
    kind = "abstract"
    max_smooth_order = 0
    period = None

    def _eval(self, t, order):
        raise NotImplementedError

    def eval(self, t, order=0):
        if order < 0:
            raise ValueError("order must be >= 0")
        if order > self.max_smooth_order:
            raise OrderUnavailable(
                f"{self.kind} gain is only C^{self.max_smooth_order}; order {order} requested")
        return self._eval(t, order)

    def derivatives(self, t: float, upto: int) -> np.ndarray:
        """``[g(t), g'(t), ..., g^(upto)(t)]``."""
        return np.array([self.eval(t, d) for d in range(upto + 1)], dtype=float)

    def __call__(self, t):
        return self.eval(t, 0)

    def params(self) -> dict:
        return {}


def eval_gain(sig: GainSignal, t, order: int = 0):
    return sig.eval(t, order)


@dataclass(frozen=True)
class Sinusoid(GainSignal):
    """``amplitude * sin(omega t + phase) + offset``."""

    amplitude: float = 1.0
    omega: float = 1.0
    phase: float = 0.0
    offset: float = 0.0
    kind = "sinusoid"
    max_smooth_order = SMOOTH

    @property
    def period(self):
        return 2 * np.pi / abs(self.omega) if self.omega else None

    def _eval(self, t, order):
        val = self.amplitude * self.omega ** order * np.sin(
            self.omega * np.asarray(t, dtype=float) + self.phase + order * np.pi / 2)
        if order == 0:
            val = val + self.offset
        return val

    def params(self):
        return dict(amplitude=self.amplitude, omega=self.omega, phase=self.phase, offset=self.offset)


@dataclass(frozen=True)
class Constant(GainSignal):
    value: float = 1.0
    kind = "constant"
    max_smooth_order = SMOOTH

    def _eval(self, t, order):
        val = float(self.value) if order == 0 else 0.0
        if np.ndim(t):
            return np.full(np.shape(t), val)
        return val

    def params(self):
        return dict(value=self.value)


def cosine_bump(s, order=0):
    """Derivatives of ``(1 + cos(pi s)) H(1 - s^2)``; continuous up to order 1."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    val = np.pi ** order * np.cos(np.pi * s + order * np.pi / 2)
    if order == 0:
        val = 1.0 + val
    return np.where(inside, val, 0.0)


@lru_cache(maxsize=None)
def _mollifier_poly(order):
    """Terms ``{(i, j): c}`` with ``psi^(d)(s) = sum c s^i w^j psi(s)``, ``w = 1/(1-s^2)``."""
    terms = {(0, 0): 1.0}
    for _ in range(order):
        nxt: dict = {}
        for (i, j), c in terms.items():
            # d/ds s^i = i s^(i-1);  d/ds w^j = 2 j s w^(j+1);  psi' = -2 s w^2 psi
            if i:
                nxt[(i - 1, j)] = nxt.get((i - 1, j), 0.0) + c * i
            if j:
                nxt[(i + 1, j + 1)] = nxt.get((i + 1, j + 1), 0.0) + 2 * c * j
            nxt[(i + 1, j + 2)] = nxt.get((i + 1, j + 2), 0.0) - 2 * c
        terms = {k: v for k, v in nxt.items() if v != 0.0}
    return tuple(terms.items())


def mollifier_bump(s, order=0):
    """Derivatives of ``e * exp(-1/(1-s^2))`` on ``|s| < 1`` (peak value 1)."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    si = np.where(inside, s, 0.0)
    w = 1.0 / (1.0 - si * si)
    psi = np.exp(1.0 - w)
    acc = np.zeros_like(si)
    for (i, j), c in _mollifier_poly(order):
        acc = acc + c * si ** i * w ** j
    return np.where(inside, acc * psi, 0.0)


_SHAPES = {"cosine": (cosine_bump, 1), "mollifier": (mollifier_bump, SMOOTH)}


@dataclass(frozen=True)
class WindowedBump(GainSignal):
    """Periodic train of compactly supported bumps.

    One bump occupies ``[start, start + width]`` of every ``period``; the
    ``"cosine"`` shape peaks at ``2 * amplitude`` and is C^1, the
    ``"mollifier"`` shape peaks at ``amplitude`` and is C^inf.
    """

    start: float
    width: float
    period: float
    amplitude: float = 1.0
    shape: str = "cosine"

    @property
    def kind(self):
        return "bump-schedule" if self.shape == "cosine" else "smooth-mollifier-schedule"

    @property
    def max_smooth_order(self):
        return _SHAPES[self.shape][1]

    def _eval(self, t, order):
        fn = _SHAPES[self.shape][0]
        half = 0.5 * self.width
        tau = np.mod(np.asarray(t, dtype=float) - self.start, self.period)
        s = (tau - half) / half
        out = self.amplitude * fn(s, order) / half ** order
        return float(out) if out.ndim == 0 else out

    def support(self, t) -> bool:
        tau = np.mod(np.asarray(t, dtype=float) - self.start, self.period)
        return (tau > 0) & (tau < self.width)

    def params(self):
        return dict(start=self.start, width=self.width, period=self.period,
                    amplitude=self.amplitude, shape=self.shape)


def bump_schedule(on1=1.8, gap=0.4, on2=1.8, period=4.0, amplitude=1.0, shape="cosine"):
    """Two time-wise orthogonal periodic gains.

    ``g1`` is on over ``[0, on1]`` of each period and ``g2`` over
    ``[on1 + gap, on1 + gap + on2]``.  The defaults give the 1.8 s / 0.4 s /
    1.8 s pattern on a 4 s cycle.
    """
    if min(on1, on2, period) <= 0 or gap < 0:
        raise BadSchedule("windows and period must be positive, gap non-negative")
    if on1 + gap + on2 > period + 1e-12:
        raise BadSchedule(f"windows overlap: {on1} + {gap} + {on2} > period {period}")
    g1 = WindowedBump(0.0, on1, period, amplitude, shape)
    g2 = WindowedBump(on1 + gap, on2, period, amplitude, shape)
    return g1, g2


@dataclass(frozen=True)
class TabulatedSpline(GainSignal):
    """Natural cubic spline through tabulated ``(t, g)`` samples (C^2)."""

    t: tuple
    g: tuple
    kind = "tabulated-spline"
    max_smooth_order = 2
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_spline", CubicSpline(np.asarray(self.t), np.asarray(self.g),
                                                        bc_type="natural"))

    @classmethod
    def from_file(cls, path):
        data = np.loadtxt(Path(path), ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (t, g)")
        return cls(tuple(data[:, 0]), tuple(data[:, 1]))

    def _eval(self, t, order):
        out = self._spline(np.asarray(t, dtype=float), order)
        return float(out) if np.ndim(out) == 0 else out

    def params(self):
        return dict(samples=len(self.t))


@dataclass(frozen=True)
class PESpec:
    window_T: float
    level_eps: float = 1e-3
    horizon: float | None = None
    grid_dt: float | None = None

    def __post_init__(self):
        if self.window_T <= 0:
            raise ValueError("window_T must be positive")
        if self.grid_dt is not None and self.grid_dt >= self.window_T:
            raise ValueError("grid_dt must be smaller than window_T")


def check_pe(sig: GainSignal, spec: PESpec, nodes_per_window: int = 2000):
    """Minimum windowed energy ``min_t int_t^{t+T} g^2``.

    For periodic signals with no horizon given, one period of window starts
    is inspected.  Returns ``(is_pe, eps_hat)``.
    """
    T = spec.window_T
    horizon = spec.horizon
    if horizon is None:
        horizon = T + (sig.period if sig.period else T)
    if horizon < 2 * T and spec.horizon is not None:
        raise ValueError("horizon must cover at least two windows")
    dt = spec.grid_dt or T / 200.0
    starts = np.arange(0.0, horizon - T + 0.5 * dt, dt)
    nodes = 2 * (nodes_per_window // 2) + 1
    u = np.linspace(0.0, 1.0, nodes)
    eps_hat = np.inf
    for chunk in np.array_split(starts, max(1, len(starts) // 256)):
        grid = chunk[:, None] + T * u[None, :]
        vals = np.asarray(sig.eval(grid, 0), dtype=float) ** 2
        energy = simpson(vals, dx=T / (nodes - 1), axis=1)
        eps_hat = min(eps_hat, float(energy.min()))
    eps_hat = max(eps_hat, 0.0)
    return eps_hat >= spec.level_eps and eps_hat > 0.0, eps_hat


def make_gain(kind: str, **params) -> GainSignal:
    """Construct a gain from a scenario declaration."""
    kind = kind.strip().lower()
    if kind == "sinusoid":
        return Sinusoid(**{k: float(v) for k, v in params.items()})
    if kind == "constant":
        return Constant(float(params.get("value", 1.0)))
    if kind in ("bump-schedule", "smooth-mollifier-schedule"):
        shape = "cosine" if kind == "bump-schedule" else "mollifier"
        return WindowedBump(float(params["start"]), float(params["width"]),
                            float(params["period"]), float(params.get("amplitude", 1.0)), shape)
    if kind == "tabulated-spline":
        return TabulatedSpline.from_file(params["file"])
    raise ValueError(f"unknown gain kind {kind!r}")


__all__ = [
    "GainSignal", "Sinusoid", "Constant", "WindowedBump", "TabulatedSpline", "PESpec",
    "eval_gain", "bump_schedule", "check_pe", "make_gain", "cosine_bump", "mollifier_bump",
]
