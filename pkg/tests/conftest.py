import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from pfctrl.lti_model import PlantModel, canonical_from_coefficients


def random_plant(rng, n=None, m=None):
    n = int(rng.integers(2, 9)) if n is None else n
    m = int(rng.integers(1, min(3, n) + 1)) if m is None else m
    return PlantModel(rng.normal(size=(n, n)), rng.normal(size=(n, m)))


def random_block_data(rng, max_n=8, max_p=3, max_r=3):
    p = int(rng.integers(1, max_p + 1))
    r = [int(v) for v in rng.integers(1, max_r + 1, size=p)]
    while sum(r) > max_n:
        r.pop()
    alpha = [rng.normal(size=rj) for rj in r]
    beta = {(k, j): rng.normal(size=r[k - 1])
            for k in range(1, len(r) + 1) for j in range(k + 1, len(r) + 1)}
    return canonical_from_coefficients(r, alpha, beta)


def hidden_plant(rng, cd):
    """``cd`` seen through a random similarity ``x = S^-1 z``."""
    S = rng.normal(size=(cd.n, cd.n)) + 2.0 * np.eye(cd.n)
    Si = np.linalg.inv(S)
    return PlantModel(Si @ cd.A_hat @ S, Si @ cd.B_hat)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


TWO_BLOCK_A = np.array([[1.0, 1.0, 0.5, 0.0], [0.0, 0.0, 1.0, 0.0],
                        [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.0]])
TWO_BLOCK_B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])


def periodic_minimum(sig, lam, k, period):
    """Minimum of the periodic solution, built from the one-period fixed point.

    The minimum sits inside the on window, just after it opens.
    """
    def forced(t):
        pts = [p for p in (sig.width,) if p < t]
        return quad(lambda s: np.exp(-lam * (t - s)) * sig.eval(s) ** k, 0, t, points=pts or None,
                    limit=200)[0]
    R_star = forced(period) / (1 - np.exp(-lam * period))
    res = minimize_scalar(lambda t: np.exp(-lam * t) * R_star + forced(t), bounds=(0.0, sig.width),
                          method="bounded", options={"xatol": 1e-10})
    return res.fun
