import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from pfctrl.augmentation import (GainPoly, build_control_law, build_omega_map, eval_omega,
                                 invert_omega, omega_residual_derivative)
from pfctrl.errors import MissingDownstreamControl, NotDivisible, OrderUnavailable
from pfctrl.gains import Constant, Sinusoid, WindowedBump
from pfctrl.lti_model import canonical_from_coefficients
from pfctrl.pfilter import k_exponent

from conftest import random_block_data

LAM = 1.3


def filter_solution(t):
    """``R' = -LAM R + sin^2 t`` with ``R(0) = 1`` (k = 2)."""
    def part(t):
        return 1 / (2 * LAM) - (LAM * np.cos(2 * t) + 2 * np.sin(2 * t)) / (2 * (LAM ** 2 + 4))
    return part(t) + (1.0 - part(0.0)) * np.exp(-LAM * t)


def along(poly, t):
    gd = Sinusoid().derivatives(t, max(poly.max_order, 0) + 1)
    return poly.evaluate(gd, filter_solution(t), LAM)


monomials = st.tuples(st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3),
                      st.lists(st.integers(0, 3), min_size=0, max_size=3),
                      st.integers(0, 3), st.integers(0, 2))


@settings(max_examples=60, deadline=None)
@given(st.lists(monomials, min_size=1, max_size=4), st.floats(0.5, 6.0))
def test_differentiate_matches_finite_difference(terms, t):
    poly = GainPoly(k=2)
    for c, ge, m, l in terms:
        poly = poly + GainPoly.monomial(c, ge, m, l, 2)
    h = 1e-5
    num = (along(poly, t + h) - along(poly, t - h)) / (2 * h)
    exact = along(poly.differentiate(), t)
    assert exact == pytest.approx(num, rel=1e-5, abs=1e-5)


def test_weight_derivative_by_hand():
    # d/dt g^2/(2R) = g g' / R - (g^2 / 2R^2)(-lam R + g^2)
    w = GainPoly.weight(2).differentiate()
    expected = (GainPoly.monomial(1.0, (1, 1), 1, 0) + GainPoly.monomial(0.5, (2,), 1, 1)
                - GainPoly.monomial(0.5, (4,), 2, 0))
    assert w == expected


def test_div_g():
    p = GainPoly.monomial(3.0, (2, 1), 1, 0)
    assert p.div_g() == GainPoly.monomial(3.0, (1, 1), 1, 0)
    with pytest.raises(NotDivisible):
        GainPoly.monomial(1.0, (0, 2), 0, 0).div_g()
    with pytest.raises(NotDivisible):
        GainPoly.const(1.0).div_g()


def test_algebra_identities():
    a = GainPoly.monomial(2.0, (1,), 1, 0)
    b = GainPoly.monomial(-1.0, (0, 1), 0, 1)
    assert (a + b) - b == a
    assert a * GainPoly.const(1.0) == a
    assert (a * b).degree == 1
    assert (a - a).is_zero()


def double_integrator(gain=None, lam=1.5, k=2):
    cd = canonical_from_coefficients([2], [[0.0, 0.0]])
    omap = build_omega_map(cd, [gain or Sinusoid()], [lam], k)
    return cd, omap


def test_two_state_map_with_unit_gain():
    _, omap = double_integrator(Constant(1.0))
    np.testing.assert_allclose(omap.matrix(0.0, np.array([1.0])), [[1.0, 0.0], [0.5, 1.0]])


def test_double_integrator_law_by_hand():
    # u = -(g'/R + lam g/(2R) - g^3/(4R^2)) z1 - (g/R) z2
    cd, omap = double_integrator()
    law = build_control_law(omap)[1]
    assert law.certificate == 1
    t, R, lam = 0.7, 0.9, 1.5
    g, gd = np.sin(t), np.cos(t)
    coef = law.compiled(Sinusoid().derivatives(t, 2), R, lam)[0]
    expected = [-(gd / R + lam * g / (2 * R) - g ** 3 / (4 * R ** 2)), -g / R]
    np.testing.assert_allclose(coef[:2], expected, atol=1e-14)


def test_third_order_block_needs_k4():
    cd = canonical_from_coefficients([3], [[0.4, -0.2, 1.0]])
    laws = build_control_law(build_omega_map(cd, [Sinusoid()], [2.0], 4))
    assert laws[1].certificate >= 1
    with pytest.raises(NotDivisible):
        build_control_law(build_omega_map(cd, [Sinusoid()], [2.0], 2))


def test_insufficient_smoothness_is_reported():
    cd = canonical_from_coefficients([3], [[0.0, 0.0, 0.0]])
    with pytest.raises(OrderUnavailable):
        build_control_law(build_omega_map(cd, [WindowedBump(0, 1.8, 4.0)], [2.0], 4))


def test_downstream_control_is_required():
    cd = canonical_from_coefficients([3, 1], [[0.1, 0.2, 0.3], [0.5]], {(1, 2): [1.0, 0.5, 0.2]})
    omap = build_omega_map(cd, [Sinusoid(), Sinusoid(phase=1.0)], [2.0, 2.0], 4)
    laws = build_control_law(omap)
    assert ("gu", 2) in laws[1].residual_derivative
    z, R = np.ones(4), np.ones(2)
    with pytest.raises(MissingDownstreamControl):
        omega_residual_derivative(omap, laws, 1, z, 0.3, R)
    val, cert = omega_residual_derivative(omap, laws, 1, z, 0.3, R, {2: 0.7})
    assert np.isfinite(val) and cert >= 1


def open_loop(cd, gains, lam, k, z0, tf):
    """``z' = A z`` (no input) together with the block filters, by an adaptive solver."""
    A = cd.structured_A()

    def rhs(t, y):
        z, R = y[:cd.n], y[cd.n:]
        g = np.array([float(gg.eval(t)) for gg in gains])
        return np.concatenate([A @ z, -np.asarray(lam) * R + g ** k])

    y0 = np.concatenate([z0, np.ones(cd.p)])
    return solve_ivp(rhs, (0, tf), y0, rtol=1e-12, atol=1e-12, dense_output=True).sol


def test_omega_recursion_along_trajectories(rng):
    for _ in range(5):
        cd = random_block_data(rng, max_n=6)
        k = k_exponent(max(cd.r))
        gains = [Sinusoid(1.0, 1.0 + 0.3 * j, 0.5 * j, 0.2) for j in range(cd.p)]
        lam = list(1.0 + rng.random(cd.p))
        omap = build_omega_map(cd, gains, lam, k)
        sol = open_loop(cd, gains, lam, k, rng.normal(size=cd.n), 3.0)

        def omega(t):
            y = sol(t)
            return eval_omega(omap, y[:cd.n], t, y[cd.n:])

        h = 1e-4
        for t in (1.0, 1.7, 2.4):
            y = sol(t)
            z, R = y[:cd.n], y[cd.n:]
            om = omega(t)
            dom = (omega(t + h) - omega(t - h)) / (2 * h)
            for j in range(1, cd.p + 1):
                g = float(gains[j - 1].eval(t))
                c = g ** k / (2 * R[j - 1])
                for i in range(1, cd.r[j - 1]):
                    a = cd.index(j, i)
                    coupling = sum(cd.beta[(j, s)][i - 1] * z[cd.index(s, 1)]
                                   for s in range(j + 1, cd.p + 1))
                    expected = dom[a] + c * om[a] - coupling
                    assert om[a + 1] == pytest.approx(expected, rel=1e-5, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 50.0))
def test_omega_round_trip(seed, t):
    rng = np.random.default_rng(seed)
    cd = random_block_data(rng, max_n=6)
    gains = [Sinusoid(1.0, 1.0 + j, 0.3 * j) for j in range(cd.p)]
    omap = build_omega_map(cd, gains, [2.0] * cd.p)
    z = rng.normal(size=cd.n)
    R = 0.05 + rng.random(cd.p)
    back = invert_omega(omap, eval_omega(omap, z, t, R), t, R)
    assert np.max(np.abs(back - z)) < 1e-10 * max(1.0, np.max(np.abs(z)))


def test_dump_lists_every_block():
    cd = canonical_from_coefficients([2, 1], [[0.0, 0.0], [0.0]], {(1, 2): [1.0, 0.0]})
    omap = build_omega_map(cd, [Sinusoid(), Sinusoid()], [1.0, 1.0])
    text = omap.dump()
    assert text.startswith("# k=2 p=2 r=[2, 1]")
    assert "block=1 omega=2" in text and "block=2 omega=1" in text
