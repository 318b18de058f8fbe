"""Plant representation and the block-triangular multi-input canonical form.

The canonical coordinates ``z = T x`` split the state into ``p`` blocks
stacked as ``z = [z^p, z^{p-1}, ..., z^1]``.  Block ``j`` has ``r_j``
states, a companion diagonal block and is driven by input ``j`` through its
last state.  Coupling is one-directional: the rows of block ``j`` depend on
the *first* state of every block ``s > j`` and on nothing else outside the
block, so block ``p`` evolves on its own.

Indices follow the mathematical convention: blocks are numbered from 1 and
``alpha[j-1][i-1]`` holds the companion coefficient ``alpha_{j,i}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IllConditioned, NotControllable

DEFAULT_RANK_TOL = 1e-9
DEFAULT_COND_BOUND = 1e12


@dataclass(frozen=True)
class PlantModel:
    """Linear plant ``x' = A x + B G(t) u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.shape[0] != A.shape[0]:
            raise ValueError("A and B must have the same number of rows")
        if not 1 <= B.shape[1] <= A.shape[0]:
            raise ValueError("need 1 <= m <= n")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("plant matrices must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass
class CanonicalData:
    """Result of :func:`canonical_transform`.

    Attributes
    ----------
    T, Tinv : ndarray
        Similarity transform ``z = T x`` and its inverse.
    A_hat, B_hat : ndarray
        ``T A T^-1`` and ``T B`` as computed numerically.
    p : int
        Number of blocks (non-redundant inputs).
    r : list of int
        Block sizes, ``r[j-1] = r_j``.
    alpha : list of ndarray
        ``alpha[j-1][i-1] = alpha_{j,i}``; the last row of block ``j`` reads
        ``[-alpha_{j,r_j}, ..., -alpha_{j,1}]``.
    beta : dict
        ``beta[(k, j)][l-1] = beta_{k,j,l}`` for ``k < j``.
    inputs : list of int
        Column of ``B`` (0-based) that drives block ``j`` is ``inputs[j-1]``.
    redundant : list of int
        Columns of ``B`` that play no role (their controls are pinned to 0).
    """

    T: np.ndarray
    Tinv: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    p: int
    r: list
    alpha: list
    beta: dict
    inputs: list
    redundant: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.T.shape[0]

    def offset(self, j: int) -> int:
        """Index of the first state of block ``j`` inside ``z``."""
        return sum(self.r[s - 1] for s in range(j + 1, self.p + 1))

    def block_slice(self, j: int) -> slice:
        o = self.offset(j)
        return slice(o, o + self.r[j - 1])

    def index(self, j: int, i: int) -> int:
        """Position of ``z^j_i`` (``i`` 1-based) in the stacked vector."""
        return self.offset(j) + i - 1

    def last(self, j: int) -> int:
        return self.index(j, self.r[j - 1])

    def block(self, M: np.ndarray, k: int, j: int) -> np.ndarray:
        """Sub-block ``M_{k,j}`` (row block ``k``, column block ``j``)."""
        return M[self.block_slice(k), self.block_slice(j)]

    def coupling_norm(self, k: int, j: int) -> float:
        """Induced 2-norm of ``A_hat_{k,j}``; zero unless ``k < j``."""
        if k >= j:
            return 0.0
        return float(np.linalg.norm(self.beta[(k, j)]))

    def structured_A(self) -> np.ndarray:
        """``A_hat`` rebuilt from ``alpha`` and ``beta`` with exact zeros and ones."""
        n = self.n
        A = np.zeros((n, n))
        for j in range(1, self.p + 1):
            rj = self.r[j - 1]
            o = self.offset(j)
            for i in range(rj - 1):
                A[o + i, o + i + 1] = 1.0
            for i in range(1, rj + 1):
                A[o + rj - 1, o + rj - i] = -self.alpha[j - 1][i - 1]
            for s in range(j + 1, self.p + 1):
                A[o:o + rj, self.offset(s)] = self.beta[(j, s)]
        return A

    def structured_B(self, m: int | None = None) -> np.ndarray:
        """Unit-vector part of ``B_hat`` (redundant columns copied verbatim)."""
        m = self.B_hat.shape[1] if m is None else m
        B = np.zeros((self.n, m))
        for c in self.redundant:
            B[:, c] = self.B_hat[:, c]
        for j in range(1, self.p + 1):
            B[self.last(j), self.inputs[j - 1]] = 1.0
        return B


def canonical_from_coefficients(r, alpha, beta=None) -> CanonicalData:
    """Canonical data for a plant given directly in block form (``T = I``).

    Blocks are stacked ``[p; ...; 1]`` and block ``j`` is driven by input
    column ``j - 1``.
    """
    r = [int(v) for v in r]
    p, n = len(r), sum(r)
    alpha = [np.asarray(a, dtype=float).reshape(rj) for a, rj in zip(alpha, r)]
    beta = {} if beta is None else dict(beta)
    for k in range(1, p + 1):
        for j in range(k + 1, p + 1):
            beta[(k, j)] = np.asarray(beta.get((k, j), np.zeros(r[k - 1])), dtype=float)
    eye = np.eye(n)
    cd = CanonicalData(eye, eye.copy(), np.zeros((n, n)), np.zeros((n, p)), p, r, alpha, beta,
                       list(range(p)))
    cd.A_hat = cd.structured_A()
    cd.B_hat = cd.structured_B(p)
    return cd


@dataclass(frozen=True)
class StructureReport:
    passed: bool
    max_violation: float
    location: str = ""


def controllability_matrix(plant: PlantModel) -> np.ndarray:
    """Return ``[B, AB, ..., A^{n-1}B]``."""
    blocks = [plant.B]
    for _ in range(plant.n - 1):
        blocks.append(plant.A @ blocks[-1])
    return np.hstack(blocks)


class _IndependenceScanner:
    """Incremental linear-independence test on unit-normalised columns."""

    def __init__(self, rank_tol: float):
        self.rank_tol = rank_tol
        self.kept: list[np.ndarray] = []

    def try_add(self, v: np.ndarray) -> bool:
        nv = np.linalg.norm(v)
        if nv == 0.0 or not np.isfinite(nv) or len(self.kept) >= v.size:
            return False
        cand = np.column_stack(self.kept + [v / nv])
        s = np.linalg.svd(cand, compute_uv=False)
        if s[-1] > self.rank_tol * s[0]:
            self.kept.append(v / nv)
            return True
        return False


def controllability_indices(plant: PlantModel, rank_tol: float = DEFAULT_RANK_TOL,
                            order: str = "cyclic"):
    """Controllability indices from a greedy column scan.

    Parameters
    ----------
    order : {"cyclic", "chain"}
        ``"cyclic"`` scans ``b_1..b_m, Ab_1..Ab_m, ...``.  ``"chain"`` scans the
        whole Krylov chain of ``b_1`` before moving to ``b_2`` and so on; this is
        the ordering for which the block-triangular canonical form exists.

    Returns
    -------
    p : int
        Number of inputs with a nonzero index.
    r : list of int
        Indices of those inputs, in input order.
    inputs : list of int
        Input columns (0-based) that own each entry of ``r``.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    n, m = plant.n, plant.m
    counts = [0] * m
    scan = _IndependenceScanner(rank_tol)
    if order == "cyclic":
        cols = [plant.B[:, j].copy() for j in range(m)]
        alive = [True] * m
        for _ in range(n):
            for j in range(m):
                if alive[j]:
                    if scan.try_add(cols[j]):
                        counts[j] += 1
                    else:
                        # A^i b_j dependent implies every later power is too
                        alive[j] = False
                    cols[j] = plant.A @ cols[j]
            if not any(alive):
                break
    elif order == "chain":
        for j in range(m):
            v = plant.B[:, j].copy()
            while len(scan.kept) < n and scan.try_add(v):
                counts[j] += 1
                v = plant.A @ v
    else:
        raise ValueError(f"unknown scan order {order!r}")
    if sum(counts) < n:
        raise NotControllable(f"only {sum(counts)} of {n} independent directions reachable")
    inputs = [j for j in range(m) if counts[j] > 0]
    return len(inputs), [counts[j] for j in inputs], inputs


def canonical_transform(plant: PlantModel, rank_tol: float = DEFAULT_RANK_TOL,
                        cond_bound: float = DEFAULT_COND_BOUND) -> CanonicalData:
    """Build ``T`` such that ``T A T^-1`` has the block-triangular canonical form.

    The columns of ``T^-1`` for block ``j`` are generated from ``b_j`` by the
    recursion ``v_{r_j} = b_j``, ``v_{i-1} = A v_i + alpha_{j, r_j-i+1} b_j``;
    the companion coefficients come from expressing ``A^{r_j} b_j`` in terms of
    its own chain and the chains of the lower-numbered inputs.
    """
    A, B = plant.A, plant.B
    n, m = plant.n, plant.m
    p, r, inputs = controllability_indices(plant, rank_tol, order="chain")

    chains = []
    for j in range(p):
        b = B[:, inputs[j]]
        chain = [b]
        for _ in range(r[j]):
            chain.append(A @ chain[-1])
        chains.append(chain)

    cols: dict[int, list[np.ndarray]] = {}
    for j in range(p):
        rj = r[j]
        basis = [chains[j][l] for l in range(rj)]
        for k in range(j):
            basis.extend(chains[k][:r[k]])
        coef, *_ = np.linalg.lstsq(np.column_stack(basis), chains[j][rj], rcond=None)
        a = coef[:rj]
        # alpha_{j, rj - l} = -a_l
        alpha = np.array([-a[rj - i] for i in range(1, rj + 1)])
        b = chains[j][0]
        v = [None] * rj
        v[rj - 1] = b
        for i in range(rj, 1, -1):
            v[i - 2] = A @ v[i - 1] + alpha[rj - i] * b
        cols[j + 1] = v

    order = []
    for j in range(p, 0, -1):
        order.extend(cols[j])
    Tinv = np.column_stack(order)
    cond = np.linalg.cond(Tinv)
    if not np.isfinite(cond) or cond > cond_bound:
        raise IllConditioned(f"cond(T) = {cond:.3g} exceeds {cond_bound:.3g}")
    T = np.linalg.inv(Tinv)
    A_hat = np.linalg.solve(Tinv, A @ Tinv)
    B_hat = np.linalg.solve(Tinv, B)

    cd = CanonicalData(T=T, Tinv=Tinv, A_hat=A_hat, B_hat=B_hat, p=p, r=list(r),
                       alpha=[], beta={}, inputs=list(inputs),
                       redundant=[c for c in range(m) if c not in inputs])
    for j in range(1, p + 1):
        rj = r[j - 1]
        row = A_hat[cd.last(j), cd.block_slice(j)]
        cd.alpha.append(np.array([-row[rj - i] for i in range(1, rj + 1)]))
    for k in range(1, p + 1):
        for j in range(k + 1, p + 1):
            cd.beta[(k, j)] = A_hat[cd.block_slice(k), cd.offset(j)].copy()
    return cd


def verify_canonical_structure(cd: CanonicalData, tol: float = 1e-8) -> StructureReport:
    """Check every structural zero and unit entry of ``A_hat`` and ``B_hat``."""
    worst, where = 0.0, ""

    def note(val, label):
        nonlocal worst, where
        if val > worst:
            worst, where = float(val), label

    A = cd.A_hat
    for k in range(1, cd.p + 1):
        rk = cd.r[k - 1]
        for j in range(1, cd.p + 1):
            blk = cd.block(A, k, j)
            if k == j:
                for i in range(rk - 1):
                    expect = np.zeros(rk)
                    expect[i + 1] = 1.0
                    dev = np.abs(blk[i] - expect)
                    note(dev.max(), f"A_hat[{k},{k}] row {i + 1}")
            elif k < j:
                if blk.shape[1] > 1:
                    note(np.abs(blk[:, 1:]).max(), f"A_hat[{k},{j}] beyond first column")
            else:
                note(np.abs(blk).max(), f"A_hat[{k},{j}] above the block diagonal")
    for j in range(1, cd.p + 1):
        col = cd.B_hat[:, cd.inputs[j - 1]]
        expect = np.zeros(cd.n)
        expect[cd.last(j)] = 1.0
        note(np.abs(col - expect).max(), f"B_hat column {cd.inputs[j - 1] + 1}")
    return StructureReport(worst <= tol, worst, where)


def read_plant_file(path) -> PlantModel:
    """Read ``n m`` then ``n`` rows of ``A`` then ``n`` rows of ``B``."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: first line must be 'n m'")
    n, m = int(rows[0][0]), int(rows[0][1])
    if len(rows) != 1 + 2 * n:
        raise ValueError(f"{path}: expected {2 * n} matrix rows, found {len(rows) - 1}")
    A = np.array([[float(v) for v in row] for row in rows[1:1 + n]])
    B = np.array([[float(v) for v in row] for row in rows[1 + n:]])
    if A.shape != (n, n) or B.shape != (n, m):
        raise ValueError(f"{path}: matrix shapes do not match header {n} {m}")
    return PlantModel(A, B)


def write_plant_file(plant: PlantModel, path) -> None:
    lines = [f"{plant.n} {plant.m}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in plant.A]
    lines += [" ".join(repr(float(v)) for v in row) for row in plant.B]
    Path(path).write_text("\n".join(lines) + "\n")
