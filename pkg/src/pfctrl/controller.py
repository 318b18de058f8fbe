"""Persistence-filter feedback for multi-input plants with singular gains.

:class:`PersistenceController` holds everything built once per plant (the
canonical form, the augmented-state map and the divided control
coefficients) and evaluates the feedback law at run time.
:class:`AdaptiveController` is the variant for canonical plants whose
companion coefficients are unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .augmentation import build_control_law, build_omega_map
from .errors import NonPositiveRate
from .lti_model import CanonicalData, PlantModel, canonical_transform
from .pfilter import filter_rhs, k_exponent
from .simulator import integrate


@dataclass
class ControllerConfig:
    lambdas: list
    lambda_star: list
    gamma: list
    margins: list
    slack: float = 0.0
    sigma: float | None = None
    adaptive: bool = False
    nu: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    alpha_hat0: list = field(default_factory=list)


def lambda_star_printed(alpha, r):
    """Largest bracketed threshold of the decay-rate condition as published.

    ``max{1 + |a_r|, 2 + |a_{r-l+1}| (l = 2..r-1), 1 - a_1 + sum_{i<r} |a_{r-i+1}|}``
    with ``a_i = alpha[i-1]``.
    """
    a = lambda i: float(alpha[i - 1])  # noqa: E731
    terms = [1.0 + abs(a(r))]
    terms += [2.0 + abs(a(r - l + 1)) for l in range(2, r)]
    terms.append(1.0 - a(1) + sum(abs(a(r - i + 1)) for i in range(1, r)))
    return max(terms)


def lambda_star_expanded(alpha, r):
    """Threshold obtained by bounding the block energy derivative term by term.

    Completing squares on ``2 R sum Omega_i Omega_{i+1} - 2 R Omega_r sum
    a_{r-i+1} Omega_i`` leaves ``Omega_r^2`` with ``1 - 2 a_1 + sum_{i<r}
    |a_{r-i+1}|``; for ``r = 1`` only ``-2 a_1`` remains.
    """
    a = lambda i: float(alpha[i - 1])  # noqa: E731
    if r == 1:
        return -2.0 * a(1)
    terms = [1.0 + abs(a(r))]
    terms += [2.0 + abs(a(r - i + 1)) for i in range(2, r)]
    terms.append(1.0 - 2.0 * a(1) + sum(abs(a(r - i + 1)) for i in range(1, r)))
    return max(terms)


def coupling_requirements(cd: CanonicalData):
    """Right-hand sides of the per-block inequalities ``gamma_j > rhs_j``."""
    p, nrm = cd.p, cd.coupling_norm
    rhs = []
    for j in range(1, p + 1):
        if p == 1:
            rhs.append(0.0)
        elif j == 1:
            rhs.append(sum(nrm(1, 1 + l) for l in range(1, p)))
        elif j == p:
            rhs.append(sum(nrm(p - l, p) for l in range(1, p)))
        else:
            rhs.append(sum(nrm(j, j + l) for l in range(1, p - j + 1))
                       + 2.0 * sum(nrm(j - l, j) for l in range(1, j)))
    return rhs


def select_lambdas(cd: CanonicalData, slack: float = 0.5, alpha=None) -> ControllerConfig:
    """Smallest compliant filter decay rates plus ``slack``.

    ``lambda_j* `` is the larger of the published threshold and the
    term-by-term one, so the resulting ``gamma_j`` certifies the block energy
    decay in both readings.
    """
    if slack < 0:
        raise ValueError("slack must be non-negative")
    alpha = cd.alpha if alpha is None else alpha
    stars = [max(lambda_star_printed(alpha[j], cd.r[j]), lambda_star_expanded(alpha[j], cd.r[j]))
             for j in range(cd.p)]
    margins = coupling_requirements(cd)
    # lambda must stay positive for the filter even when the threshold is negative
    lambdas = [max(s + m + slack, 1e-3 + slack) for s, m in zip(stars, margins)]
    gamma = [lam - s for lam, s in zip(lambdas, stars)]
    cfg = ControllerConfig(lambdas, stars, gamma, margins, slack)
    try:
        cfg.sigma = sigma_estimate(cfg, cd)
    except NonPositiveRate:
        cfg.sigma = None
    return cfg


def config_with_lambdas(cd: CanonicalData, lambdas) -> ControllerConfig:
    """Configuration for user-chosen decay rates; ``sigma`` is None if not certified."""
    cfg = select_lambdas(cd, 0.0)
    cfg.lambdas = [float(v) for v in np.broadcast_to(np.asarray(lambdas, dtype=float), (cd.p,))]
    cfg.gamma = [lam - s for lam, s in zip(cfg.lambdas, cfg.lambda_star)]
    cfg.slack = None
    certified = all(g > m for g, m in zip(cfg.gamma, cfg.margins))
    try:
        cfg.sigma = sigma_estimate(cfg, cd) if certified else None
    except NonPositiveRate:
        cfg.sigma = None
    return cfg


def sigma_estimate(config: ControllerConfig, cd: CanonicalData) -> float:
    """Convergence-rate estimate for the amalgamated Lyapunov function."""
    g, p, nrm = config.gamma, cd.p, cd.coupling_norm
    if p == 1:
        sigma = g[0]
    else:
        terms = [g[p - 1] / 2.0]
        for j in range(2, p):
            terms.append((g[j - 1] - sum(nrm(j, j + l) for l in range(1, p - j + 1))) / 2.0)
        terms.append(g[0] - sum(nrm(1, 1 + l) for l in range(1, p)))
        sigma = min(terms)
    if sigma <= 0:
        raise NonPositiveRate(f"rate estimate {sigma:.4g} is not positive")
    return float(sigma)


class PersistenceController:
    """Feedback ``u = u(x, t, R)`` with one persistence filter per block.

    Parameters
    ----------
    plant : PlantModel
    gains : sequence of GainSignal
        One gain per input column of ``B``.
    config : ControllerConfig, optional
        Defaults to :func:`select_lambdas` with ``slack``.
    k : int, optional
        Filter exponent; defaults to ``k_exponent(max r_j)``.
    """

    def __init__(self, plant: PlantModel, gains, config: ControllerConfig | None = None,
                 k: int | None = None, slack: float = 0.5, R0=1.0, cd: CanonicalData | None = None):
        if len(gains) != plant.m:
            raise ValueError("need one gain per input")
        self.plant = plant
        self.gains = list(gains)
        self.cd = canonical_transform(plant) if cd is None else cd
        self.k = k_exponent(max(self.cd.r)) if k is None else k
        self.config = select_lambdas(self.cd, slack) if config is None else config
        self.block_gains = [self.gains[c] for c in self.cd.inputs]
        self.omap = build_omega_map(self.cd, self.block_gains, self.config.lambdas, self.k)
        self.laws = build_control_law(self.omap)
        self.R0 = np.broadcast_to(np.asarray(R0, dtype=float), (self.cd.p,)).copy()

    @property
    def p(self):
        return self.cd.p

    # composite state layout: [x (n), R (p)]
    def plant_state(self, y):
        return y[:self.plant.n]

    def filter_values(self, y):
        return y[self.plant.n:self.plant.n + self.p]

    def initial_state(self, x0):
        return np.concatenate([np.asarray(x0, dtype=float), self.R0])

    def labels(self):
        return ([f"x{i + 1}" for i in range(self.plant.n)]
                + [f"R{j}" for j in range(1, self.p + 1)])

    def block_controls(self, z, t, R, lam=None, alpha=None):
        """Controls of blocks ``p, p-1, ..., 1`` (returned indexed by block)."""
        cd = self.cd
        lam = self.config.lambdas if lam is None else lam
        alpha = cd.alpha if alpha is None else alpha
        n, p = cd.n, cd.p
        vars_ = np.zeros(n + p)
        vars_[:n] = z
        u = np.zeros(p)
        for j in range(p, 0, -1):
            law = self.laws[j]
            gd = self.block_gains[j - 1].derivatives(t, law.compiled.order)
            coef = law.compiled(gd, R[j - 1], lam[j - 1])
            rj = cd.r[j - 1]
            uj = float(coef[0] @ vars_)
            for i in range(1, rj + 1):
                uj -= float(alpha[j - 1][rj - i]) * float(coef[1 + i, :n] @ z)
            u[j - 1] = uj
            vars_[n + j - 1] = gd[0] * uj
        return u

    def feedback_row(self, j, t, R_j, lam_j=None):
        """Row ``K`` with ``u_j = K z`` when no downstream block is active.

        Used by the observer, whose nominal blocks are single-block systems.
        """
        cd = self.cd
        n, rj = cd.n, cd.r[j - 1]
        lam_j = self.config.lambdas[j - 1] if lam_j is None else lam_j
        law = self.laws[j]
        gd = self.block_gains[j - 1].derivatives(t, law.compiled.order)
        coef = law.compiled(gd, R_j, lam_j)
        row = coef[0, :n].copy()
        for i in range(1, rj + 1):
            row -= cd.alpha[j - 1][rj - i] * coef[1 + i, :n]
        return row

    def control(self, x, t, R, lam=None, alpha=None):
        """Full input vector; redundant inputs are pinned to zero."""
        z = self.cd.T @ np.asarray(x, dtype=float)
        ub = self.block_controls(z, t, R, lam, alpha)
        u = np.zeros(self.plant.m)
        for j in range(1, self.p + 1):
            u[self.cd.inputs[j - 1]] = ub[j - 1]
        return u

    def gain_values(self, t):
        return np.array([float(g.eval(t, 0)) for g in self.gains])

    def rhs(self, t, y):
        n = self.plant.n
        x, R = y[:n], y[n:n + self.p]
        u = self.control(x, t, R)
        g = self.gain_values(t)
        dx = self.plant.A @ x + self.plant.B @ (g * u)
        gb = np.array([g[c] for c in self.cd.inputs])
        dR = filter_rhs(R, gb, np.asarray(self.config.lambdas), self.k)
        return np.concatenate([dx, dR])

    def omega_blocks(self, y, t):
        R = self.filter_values(y)
        z = self.cd.T @ self.plant_state(y)
        om = self.omap.matrix(t, R) @ z
        return [om[self.cd.block_slice(j)] for j in range(1, self.p + 1)]

    def sample_outputs(self, t, y):
        x, R = self.plant_state(y), self.filter_values(y)
        u = self.control(x, t, R)
        return {"u": u, "norm_x": float(np.linalg.norm(x))}

    def simulate(self, x0, tf, dt=1e-3, record_every=1):
        traj = integrate(self.rhs, self.initial_state(x0), 0.0, tf, dt, labels=self.labels(),
                         output=self.sample_outputs, record_every=record_every)
        traj.meta.update(lambdas=list(self.config.lambdas), sigma=self.config.sigma, k=self.k,
                         r=list(self.cd.r), p=self.p)
        return traj


def control_theorem1(x, t, ctx: PersistenceController, R):
    return ctx.control(x, t, R)


class AdaptiveController:
    """Adaptive law for a plant given directly in canonical form.

    The block structure (``r_j``, ``beta``) is known, the companion
    coefficients are estimated online and every filter decay rate is itself
    a state driven by ``nu_j R_j |Omega^j|^2``.

    Composite state: ``[z (n), R (p), lam_hat (p), alpha_hat (sum r_j)]``.
    """

    def __init__(self, cd: CanonicalData, gains, nu, eta, lam0=1.0, alpha_hat0=None,
                 k=None, R0=1.0, true_alpha=None):
        self.cd = cd
        p = cd.p
        self.nu = np.broadcast_to(np.asarray(nu, dtype=float), (p,)).copy()
        self.eta = [np.broadcast_to(np.asarray(e, dtype=float), (cd.r[j],)).copy()
                    for j, e in enumerate(eta if np.ndim(eta) else [eta] * p)]
        self.lam0 = np.broadcast_to(np.asarray(lam0, dtype=float), (p,)).copy()
        self.R0 = np.broadcast_to(np.asarray(R0, dtype=float), (p,)).copy()
        if alpha_hat0 is None:
            alpha_hat0 = [np.zeros(rj) for rj in cd.r]
        self.alpha_hat0 = [np.asarray(a, dtype=float) for a in alpha_hat0]
        self.true_alpha = cd.alpha if true_alpha is None else true_alpha
        cfg = ControllerConfig(list(self.lam0), [0.0] * p, [0.0] * p, [0.0] * p, adaptive=True,
                               nu=list(self.nu), eta=self.eta, alpha_hat0=self.alpha_hat0)
        plant = PlantModel(cd.structured_A(), cd.structured_B())
        self.inner = PersistenceController(plant, [gains[c] for c in cd.inputs]
                                           if len(gains) == plant.m else gains,
                                           config=cfg, k=k, cd=cd)
        self.k = self.inner.k
        self.gains = self.inner.gains
        self._true_plant = self._build_true_plant()

    def _build_true_plant(self):
        return replace(self.cd, alpha=list(self.true_alpha)).structured_A()

    @property
    def p(self):
        return self.cd.p

    def _split(self, y):
        n, p = self.cd.n, self.p
        z = y[:n]
        R = y[n:n + p]
        lam = y[n + p:n + 2 * p]
        flat = y[n + 2 * p:]
        alpha, o = [], 0
        for rj in self.cd.r:
            alpha.append(flat[o:o + rj])
            o += rj
        return z, R, lam, alpha

    def initial_state(self, z0):
        return np.concatenate([np.asarray(z0, dtype=float), self.R0, self.lam0,
                               *self.alpha_hat0])

    def labels(self):
        n, p = self.cd.n, self.p
        labs = [f"z{i + 1}" for i in range(n)] + [f"R{j}" for j in range(1, p + 1)]
        labs += [f"lam{j}" for j in range(1, p + 1)]
        labs += [f"alpha{j}_{i}" for j in range(1, p + 1) for i in range(1, self.cd.r[j - 1] + 1)]
        return labs

    def filter_values(self, y):
        return self._split(y)[1]

    def plant_state(self, y):
        return self._split(y)[0]

    def omega_blocks(self, y, t):
        z, R, lam, _ = self._split(y)
        om = self.inner.omap.matrix(t, R, lam) @ z
        return [om[self.cd.block_slice(j)] for j in range(1, self.p + 1)]

    def control_adaptive(self, z, t, R, lam, alpha_hat):
        """Returns ``(u, d alpha_hat/dt, d lam_hat/dt)``; ``u`` is indexed by block."""
        cd = self.cd
        u = self.inner.block_controls(z, t, R, lam, alpha_hat)
        om = self.inner.omap.matrix(t, R, lam) @ z
        dalpha, dlam = [], np.zeros(self.p)
        for j in range(1, self.p + 1):
            sl = cd.block_slice(j)
            ob, zb = om[sl], z[sl]
            rj = cd.r[j - 1]
            dlam[j - 1] = self.nu[j - 1] * R[j - 1] * float(ob @ ob)
            da = np.zeros(rj)
            for i in range(1, rj + 1):
                # alpha_{j, r_j - i + 1} sits at position r_j - i
                da[rj - i] = 2.0 * self.eta[j - 1][i - 1] * R[j - 1] * ob[-1] * (ob[i - 1] - zb[i - 1])
            dalpha.append(da)
        return u, dalpha, dlam

    def rhs(self, t, y):
        cd = self.cd
        z, R, lam, alpha = self._split(y)
        u, dalpha, dlam = self.control_adaptive(z, t, R, lam, alpha)
        gb = np.array([float(g.eval(t, 0)) for g in self.inner.block_gains])
        dz = self._true_plant @ z
        for j in range(1, self.p + 1):
            dz[cd.last(j)] += gb[j - 1] * u[j - 1]
        dR = filter_rhs(R, gb, lam, self.k)
        return np.concatenate([dz, dR, dlam, *dalpha])

    def sample_outputs(self, t, y):
        z, R, lam, alpha = self._split(y)
        u = self.inner.block_controls(z, t, R, lam, alpha)
        return {"u": u, "norm_z": float(np.linalg.norm(z))}

    def simulate(self, z0, tf, dt=1e-3, record_every=1):
        return integrate(self.rhs, self.initial_state(z0), 0.0, tf, dt, labels=self.labels(),
                         output=self.sample_outputs, record_every=record_every)


def control_adaptive(z, t, ctx: AdaptiveController, estimates):
    """``estimates = (R, lam_hat, alpha_hat)``."""
    R, lam, alpha = estimates
    return ctx.control_adaptive(z, t, R, lam, alpha)
