"""Persistence filters ``R' = -lambda R + g^k`` and their adaptive variant."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import NotPE
from .gains import GainSignal, PESpec, check_pe
from .simulator import integrate


def k_exponent(r: int) -> int:
    """Filter exponent ``max(2, 2**ceil(log2 r))`` for largest block size ``r``."""
    if r < 1:
        raise ValueError("block size must be >= 1")
    return max(2, 2 ** math.ceil(math.log2(r)))


@dataclass
class PersistenceFilter:
    """Configuration of one filter.

    In adaptive mode ``lam`` is the initial value of the decay-rate state and
    ``nu`` its adaptation gain; ``lam_ceiling`` optionally clamps it.
    """

    lam: float
    k: int = 2
    R0: float = 1.0
    adaptive: bool = False
    nu: float = 0.0
    lam_ceiling: float | None = None

    def __post_init__(self):
        if self.R0 <= 0:
            raise ValueError("R(0) must be positive")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.adaptive and self.nu <= 0:
            raise ValueError("adaptive filters need nu > 0")


def filter_rhs(R, g, lam, k):
    """``-lam * R + g**k``."""
    return -lam * R + g ** k


def adaptive_lambda_rhs(nu, R, omega_block, lam=None, ceiling=None):
    """``nu * R * |Omega|^2``; frozen at ``ceiling`` once reached."""
    rate = nu * R * float(np.dot(omega_block, omega_block))
    if ceiling is not None and lam is not None and lam >= ceiling:
        warnings.warn("adaptive decay rate reached its safety ceiling", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return rate


def simulate_filter(sig: GainSignal, lam: float, k: int, horizon: float, dt: float,
                    R0: float = 1.0):
    """Integrate a fixed-rate filter driven by ``sig`` from ``R(0) = R0``."""
    def rhs(t, y):
        return np.array([filter_rhs(y[0], sig.eval(t, 0), lam, k)])
    return integrate(rhs, [R0], 0.0, horizon, dt, labels=["R"])


def filter_samples(sig: GainSignal, lam: float, k: int, horizon: float, dt: float,
                   R0: float = 1.0, nodes: int = 5):
    """Fixed-rate filter on a uniform grid by exact exponential stepping.

    ``R_{i+1} = exp(-lam dt) R_i + int_0^dt exp(-lam (dt - s)) g^k(t_i + s) ds``
    with the forcing integral taken by Gauss-Legendre quadrature and the
    recursion run as a first-order linear filter.  Returns ``(times, R)``.
    """
    n = int(round(horizon / dt))
    times = dt * np.arange(n + 1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * dt * (x + 1.0)
    g = np.asarray(sig.eval(times[:-1, None] + s[None, :], 0), dtype=float)
    forcing = (g ** k * np.exp(-lam * (dt - s))[None, :]) @ (0.5 * dt * w)
    decay = np.exp(-lam * dt)
    R, _ = lfilter([1.0], [1.0, -decay], forcing, zi=[decay * R0])
    return times, np.concatenate([[R0], R])


def filter_bounds_estimate(sig: GainSignal, lam: float, k: int, horizon: float,
                           dt: float = 1e-3, R0: float = 1.0, window: float | None = None):
    """Observed ``(R_min, R_max)`` after the first excitation window.

    ``window`` defaults to the signal period (or a tenth of the horizon for
    aperiodic signals).

    Raises
    ------
    NotPE
        If the gain has no energy over some window of the horizon.
    """
    if window is None:
        window = sig.period if sig.period else 0.1 * horizon
    _, eps_hat = check_pe(sig, PESpec(window, 0.0, horizon=max(horizon, 2 * window),
                                      grid_dt=min(window / 20, 0.05)))
    if eps_hat <= 0.0:
        raise NotPE("gain has a window with zero energy; R decays to zero")
    times, R = filter_samples(sig, lam, k, horizon, dt, R0)
    tail = R[times >= window]
    return float(tail.min()), float(tail.max())
