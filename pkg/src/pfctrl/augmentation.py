"""Augmented states and the exact division of control coefficients by the gain.

Coefficients of the feedback law are polynomials in the gain derivatives
``g, g', g'', ...``, in ``1/R`` and in the filter decay rate ``lambda``.
:class:`GainPoly` stores them as monomials so that

* time derivatives follow from the product rule with ``R'`` replaced by
  ``-lambda R + g^k`` (``lambda`` is treated as frozen), and
* division by ``g`` lowers the exponent of the underived ``g`` in every
  monomial, which is only possible if that exponent is at least one.  This is
  what keeps the law finite while ``g`` sits at zero.

Linear expressions in the canonical state are dictionaries
``{variable: GainPoly}``.  Variables are ``("z", i)`` for the ``i``-th
component of the stacked canonical state and ``("gu", s)`` for the product
``g_s u_s`` of a downstream block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import MissingDownstreamControl, NotDivisible, UnsupportedStructure
from .lti_model import CanonicalData

_CLEAN = 1e-13


def _trim(exps):
    exps = list(exps)
    while exps and exps[-1] == 0:
        exps.pop()
    return tuple(exps)


class GainPoly:
    """Sum of monomials ``c * prod_d (g^(d))^e_d * R^-m * lambda^l``.

    ``terms`` maps ``(g_exps, m, l)`` to the coefficient ``c``; ``g_exps[d]``
    is the exponent of the ``d``-th derivative of ``g``.  ``k`` is the filter
    exponent used when differentiating powers of ``1/R``.
    """

    __slots__ = ("terms", "k")

    def __init__(self, terms=None, k=2):
        self.k = k
        self.terms = {}
        for key, c in (terms or {}).items():
            if c != 0.0:
                self.terms[key] = self.terms.get(key, 0.0) + c

    # constructors
    @classmethod
    def const(cls, c, k=2):
        return cls({((), 0, 0): float(c)}, k)

    @classmethod
    def monomial(cls, c, g_exps=(), rpow=0, lpow=0, k=2):
        return cls({(_trim(g_exps), rpow, lpow): float(c)}, k)

    @classmethod
    def weight(cls, k):
        """``g^k / (2 R)``, the filter weight of the augmented-state recursion."""
        return cls.monomial(0.5, (k,), 1, 0, k)

    # algebra
    def _clean(self):
        if not self.terms:
            return self
        big = max(abs(c) for c in self.terms.values())
        self.terms = {key: c for key, c in self.terms.items() if abs(c) > _CLEAN * big}
        return self

    def __add__(self, other):
        if not isinstance(other, GainPoly):
            other = GainPoly.const(other, self.k)
        out = GainPoly(self.terms, self.k)
        for key, c in other.terms.items():
            out.terms[key] = out.terms.get(key, 0.0) + c
        return out._clean()

    __radd__ = __add__

    def __neg__(self):
        return GainPoly({key: -c for key, c in self.terms.items()}, self.k)

    def __sub__(self, other):
        return self + (-other if isinstance(other, GainPoly) else -float(other))

    def __mul__(self, other):
        if not isinstance(other, GainPoly):
            other = float(other)
            if other == 0.0:
                return GainPoly(k=self.k)
            return GainPoly({key: c * other for key, c in self.terms.items()}, self.k)
        out: dict = {}
        for (ga, ma, la), ca in self.terms.items():
            for (gb, mb, lb), cb in other.terms.items():
                n = max(len(ga), len(gb))
                ge = _trim(tuple((ga[d] if d < len(ga) else 0) + (gb[d] if d < len(gb) else 0)
                                 for d in range(n)))
                key = (ge, ma + mb, la + lb)
                out[key] = out.get(key, 0.0) + ca * cb
        return GainPoly(out, self.k)._clean()

    __rmul__ = __mul__

    def differentiate(self):
        """Time derivative, substituting ``R' = -lambda R + g^k``."""
        out: dict = {}

        def add(key, c):
            out[key] = out.get(key, 0.0) + c

        for (ge, m, l), c in self.terms.items():
            for d, e in enumerate(ge):
                if e == 0:
                    continue
                new = list(ge) + [0]
                new[d] -= 1
                new[d + 1] += 1
                add((_trim(new), m, l), c * e)
            if m:
                add((ge, m, l + 1), c * m)
                new = list(ge) if ge else [0]
                new[0] += self.k
                add((_trim(new), m + 1, l), -c * m)
        return GainPoly(out, self.k)._clean()

    @property
    def degree(self):
        """Exponent of the underived ``g`` shared by every monomial (inf if zero)."""
        if not self.terms:
            return float("inf")
        return min(ge[0] if ge else 0 for ge, _, _ in self.terms)

    def div_g(self):
        if self.degree < 1:
            raise NotDivisible(f"term without a factor g: {self}")
        out = {}
        for (ge, m, l), c in self.terms.items():
            new = list(ge)
            new[0] -= 1
            out[(_trim(new), m, l)] = c
        return GainPoly(out, self.k)

    @property
    def max_order(self):
        return max((len(ge) - 1 for ge, _, _ in self.terms), default=0)

    def is_zero(self):
        return not self.terms

    def is_one(self):
        return list(self.terms.items()) == [(((), 0, 0), 1.0)]

    def evaluate(self, gd, R, lam):
        total = 0.0
        for (ge, m, l), c in self.terms.items():
            v = c
            for d, e in enumerate(ge):
                if e:
                    v *= gd[d] ** e
            total += v * R ** (-m) * lam ** l
        return total

    def __eq__(self, other):
        if not isinstance(other, GainPoly):
            other = GainPoly.const(other, self.k)
        diff = self - other
        return diff.is_zero()

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for (ge, m, l), c in sorted(self.terms.items()):
            fac = [f"{c:g}"]
            for d, e in enumerate(ge):
                if e:
                    name = "g" if d == 0 else f"g^({d})"
                    fac.append(name if e == 1 else f"{name}^{e}")
            if m:
                fac.append(f"R^-{m}")
            if l:
                fac.append("lam" if l == 1 else f"lam^{l}")
            parts.append("*".join(fac))
        return " + ".join(parts)


def gain_poly_differentiate(pg: GainPoly) -> GainPoly:
    return pg.differentiate()


def gain_poly_div_g(pg: GainPoly) -> GainPoly:
    return pg.div_g()


# ---------------------------------------------------------------------------
# linear expressions over the canonical state


def lin_add(*exprs):
    out: dict = {}
    for e in exprs:
        for var, poly in e.items():
            out[var] = out[var] + poly if var in out else poly
    return {v: p for v, p in out.items() if not p.is_zero()}


def lin_scale(expr, factor):
    out = {v: p * factor for v, p in expr.items()}
    return {v: p for v, p in out.items() if not p.is_zero()}


def lin_div_g(expr, where=""):
    try:
        return {v: p.div_g() for v, p in expr.items()}
    except NotDivisible as exc:
        raise NotDivisible(f"{where}: {exc}") from None


def lin_degree(expr):
    return min((p.degree for p in expr.values()), default=float("inf"))


class _Dynamics:
    """Rows of ``z' = A_hat z + B_hat G u`` with exact structural entries."""

    def __init__(self, cd: CanonicalData):
        self.cd = cd
        self.A = cd.structured_A()
        self.controlled = {cd.last(j): j for j in range(1, cd.p + 1)}

    def zdot(self, i):
        row = {("z", l): float(a) for l, a in enumerate(self.A[i]) if a != 0.0}
        if i in self.controlled:
            row[("gu", self.controlled[i])] = 1.0
        return row


def lin_differentiate(expr, dyn: _Dynamics, k):
    out: list[dict] = []
    for var, poly in expr.items():
        if var[0] != "z":
            raise UnsupportedStructure(
                "an augmented state depends on a downstream control; its derivative "
                "would need the derivative of that control")
        dp = poly.differentiate()
        if not dp.is_zero():
            out.append({var: dp})
        for v2, a in dyn.zdot(var[1]).items():
            out.append({v2: poly * a})
    return lin_add(*out)


def _unit(var, k):
    return {var: GainPoly.const(1.0, k)}


# ---------------------------------------------------------------------------
# the augmented-state map


class _Compiled:
    """Fast numeric evaluation of a list of linear expressions."""

    def __init__(self, exprs, variables, k):
        self.nv = len(variables)
        self.ne = len(exprs)
        vidx = {v: i for i, v in enumerate(variables)}
        coeff, rpow, lpow, slots, gexp = [], [], [], [], []
        order = 0
        for e_i, expr in enumerate(exprs):
            for var, poly in expr.items():
                for (ge, m, l), c in poly.terms.items():
                    coeff.append(c)
                    rpow.append(m)
                    lpow.append(l)
                    gexp.append(ge)
                    slots.append(e_i * self.nv + vidx[var])
                    order = max(order, len(ge) - 1)
        self.order = order
        self.coeff = np.array(coeff, dtype=float)
        self.rpow = np.array(rpow, dtype=float)
        self.lpow = np.array(lpow, dtype=float)
        self.slots = np.array(slots, dtype=int)
        E = np.zeros((len(coeff), order + 1))
        for i, ge in enumerate(gexp):
            E[i, :len(ge)] = ge
        self.E = E

    def __call__(self, gd, R, lam):
        if self.coeff.size == 0:
            return np.zeros((self.ne, self.nv))
        gd = np.asarray(gd[:self.order + 1], dtype=float)
        vals = self.coeff * np.prod(gd[None, :] ** self.E, axis=1) \
            * R ** (-self.rpow) * lam ** self.lpow
        return np.bincount(self.slots, weights=vals,
                           minlength=self.ne * self.nv).reshape(self.ne, self.nv)


@dataclass
class BlockMap:
    """Augmented states of one block as linear expressions in ``z``."""

    j: int
    omega: list
    compiled: _Compiled = field(repr=False)


@dataclass
class OmegaMap:
    """Time-varying, lower-unitriangular map ``z -> Omega``.

    ``gains[j-1]`` and ``lambdas[j-1]`` belong to block ``j``.
    """

    cd: CanonicalData
    k: int
    gains: list
    lambdas: list
    blocks: dict
    variables: list

    @property
    def p(self):
        return self.cd.p

    def gain_derivatives(self, j, t, upto):
        return self.gains[j - 1].derivatives(t, upto)

    def lam(self, j, lam=None):
        return self.lambdas[j - 1] if lam is None else lam[j - 1]

    def matrix(self, t, R, lam=None) -> np.ndarray:
        """``M(t)`` with ``Omega = M z``."""
        n = self.cd.n
        M = np.zeros((n, n))
        for j, bm in self.blocks.items():
            gd = self.gain_derivatives(j, t, bm.compiled.order)
            coef = bm.compiled(gd, R[j - 1], self.lam(j, lam))
            M[self.cd.block_slice(j)] = coef[:, :n]
        return M

    def dump(self) -> str:
        """One monomial per line: block, Omega index, target, coefficient and factors."""
        lines = [f"# k={self.k} p={self.p} r={self.cd.r}"]
        for j in sorted(self.blocks, reverse=True):
            for i, expr in enumerate(self.blocks[j].omega, start=1):
                for var in sorted(expr, key=lambda v: (v[0], v[1])):
                    for (ge, m, l), c in sorted(expr[var].terms.items()):
                        lines.append(f"block={j} omega={i} target={var[0]}{var[1]} "
                                     f"coeff={c!r} gexp={list(ge)} Rpow={m} lampow={l}")
        return "\n".join(lines) + "\n"


def build_omega_map(cd: CanonicalData, gains, lambdas, k=None) -> OmegaMap:
    """Expand the augmented-state recursions for every block.

    ``Omega^j_1 = z^j_1`` and
    ``Omega^j_{i+1} = d/dt Omega^j_i + g_j^k/(2 R_j) Omega^j_i
    - sum_{s>j} beta_{j,s,i} Omega^s_1``.

    Parameters
    ----------
    gains : sequence of GainSignal
        One gain per block (``gains[j-1]`` for block ``j``).
    lambdas : sequence of float
        Filter decay rates per block (frozen values used by the derivative rule).
    k : int, optional
        Filter exponent; defaults to ``k_exponent(max r)``.
    """
    from .pfilter import k_exponent

    if k is None:
        k = k_exponent(max(cd.r))
    if len(gains) != cd.p or len(lambdas) != cd.p:
        raise ValueError("need one gain and one lambda per block")
    dyn = _Dynamics(cd)
    variables = [("z", i) for i in range(cd.n)] + [("gu", s) for s in range(1, cd.p + 1)]
    blocks = {}
    c = GainPoly.weight(k)
    for j in range(1, cd.p + 1):
        omega = [_unit(("z", cd.index(j, 1)), k)]
        for i in range(1, cd.r[j - 1]):
            prev = omega[-1]
            parts = [lin_differentiate(prev, dyn, k), lin_scale(prev, c)]
            for s in range(j + 1, cd.p + 1):
                b = float(cd.beta[(j, s)][i - 1])
                if b != 0.0:
                    parts.append({("z", cd.index(s, 1)): GainPoly.const(-b, k)})
            omega.append(lin_add(*parts))
        if any(var[0] == "gu" for e in omega for var in e):
            raise UnsupportedStructure(
                f"block {j}: augmented states reach a downstream controlled row")
        for i, expr in enumerate(omega, start=1):
            lead = expr.get(("z", cd.index(j, i)))
            if lead is None or not lead.is_one():
                raise AssertionError(f"Omega^{j}_{i} is not unitriangular")
        needed = max((p.max_order for e in omega for p in e.values()), default=0)
        gains[j - 1].eval(0.0, max(needed, 0))  # OrderUnavailable surfaces here
        blocks[j] = BlockMap(j, omega, _Compiled(omega, variables, k))
    return OmegaMap(cd, k, list(gains), list(lambdas), blocks, variables)


def eval_omega(omap: OmegaMap, z, t, R, lam=None) -> np.ndarray:
    """Stacked ``Omega`` (same block ordering as ``z``)."""
    return omap.matrix(t, R, lam) @ np.asarray(z, dtype=float)


def invert_omega(omap: OmegaMap, Omega, t, R, lam=None) -> np.ndarray:
    M = omap.matrix(t, R, lam)
    return solve_triangular(M, np.asarray(Omega, dtype=float), lower=True, unit_diagonal=True)


# ---------------------------------------------------------------------------
# control-law numerators


@dataclass
class BlockLaw:
    """Coefficient expressions of ``u_j``, already divided by ``g_j``.

    ``u_j = base . [z, g u] - sum_i alpha_{j, r_j-i+1} * (residual_i . z)``
    where ``residual_i`` is ``(Omega_i - z_i) / g_j``.
    """

    j: int
    residual_derivative: dict
    base: dict
    residual: list
    certificate: float
    compiled: _Compiled = field(repr=False)


def build_control_law(omap: OmegaMap) -> dict:
    """Form the control numerators of every block and divide them by ``g_j``.

    Raises
    ------
    NotDivisible
        When any numerator carries a monomial free of ``g``; this means the
        filter exponent is too small for the block size.
    """
    cd, k = omap.cd, omap.k
    dyn = _Dynamics(cd)
    c = GainPoly.weight(k)
    laws = {}
    for j in range(1, cd.p + 1):
        rj = cd.r[j - 1]
        omega = omap.blocks[j].omega
        top = cd.index(j, rj)
        res_top = lin_add(omega[-1], {("z", top): GainPoly.const(-1.0, k)})
        deriv = lin_differentiate(res_top, dyn, k)
        numer = lin_add(deriv, lin_scale(omega[-1], c))
        residuals = []
        for i in range(1, rj + 1):
            residuals.append(lin_add(omega[i - 1], {("z", cd.index(j, i)): GainPoly.const(-1.0, k)}))
        cert = min([lin_degree(numer)] + [lin_degree(e) for e in residuals])
        base = lin_scale(lin_div_g(numer, f"block {j} control"), -1.0)
        res_div = [lin_div_g(e, f"block {j} residual {i}") for i, e in enumerate(residuals, 1)]
        exprs = [base, deriv] + res_div
        laws[j] = BlockLaw(j, deriv, base, res_div, cert,
                           _Compiled(exprs, omap.variables, k))
        needed = laws[j].compiled.order
        omap.gains[j - 1].eval(0.0, max(needed, 0))
    return laws


def omega_residual_derivative(omap: OmegaMap, laws: dict, j: int, z, t, R,
                              downstream_controls: dict | None = None, lam=None):
    """``d/dt (Omega^j_{r_j} - z^j_{r_j})`` with known downstream controls.

    Returns ``(value, certificate)``; the certificate is the power of ``g_j``
    shared by every term of the control numerator of block ``j``.
    """
    law = laws[j]
    cd = omap.cd
    downstream_controls = downstream_controls or {}
    gd = omap.gain_derivatives(j, t, law.compiled.order)
    coef = law.compiled(gd, R[j - 1], omap.lam(j, lam))[1]
    val = float(coef[:cd.n] @ np.asarray(z, dtype=float))
    for s in range(1, cd.p + 1):
        w = coef[cd.n + s - 1]
        if ("gu", s) in law.residual_derivative:
            if s not in downstream_controls:
                raise MissingDownstreamControl(f"block {j} needs u_{s}")
            val += w * float(omap.gains[s - 1].eval(t, 0)) * downstream_controls[s]
    return val, law.certificate
