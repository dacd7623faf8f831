import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from halfspace_heat.sobolev import (FunctionData, QuadratureOptions, SobolevParams, TestFunction,
                                    global_failure_witness, gn_theta, holder_chain, local_embedding_check,
                                    make_family, quotient_gn, quotient_mazya, quotient_sobolev, sobolev_exponent,
                                    y_rule)

COARSE = QuadratureOptions(order=8, x_panels=4, y_panels=4)


def test_sobolev_exponent():
    assert sobolev_exponent(2, 1) == 4
    assert sobolev_exponent(2, 0) == 6
    assert sobolev_exponent(1, Fraction(1, 2)) == Fraction(10)
    assert isinstance(sobolev_exponent(3, Fraction(1, 3)), Fraction)
    assert sobolev_exponent(1, -0.5) == math.inf
    assert sobolev_exponent(1, 0) == math.inf


def test_theta():
    assert gn_theta(1, -0.5, 4.0) == pytest.approx(0.5)
    assert gn_theta(1, 1.0, 4.0) == pytest.approx(0.75)
    assert gn_theta(2, 1.0, float(sobolev_exponent(2, 1.0))) == pytest.approx(1.0)


@pytest.mark.parametrize("w", [-0.9, -0.5, 0.0, 1.0, 2.5])
def test_y_rule_moments(w):
    y, wt = y_rule(0.0, 2.0, w)
    for p in (0, 1, 3, 7):
        assert np.sum(wt * y ** p) == pytest.approx(2.0 ** (p + w + 1) / (p + w + 1), rel=1e-12)
    y, wt = y_rule(0.5, 2.0, w)
    assert np.sum(wt) == pytest.approx((2.0 ** (w + 1) - 0.5 ** (w + 1)) / (w + 1), rel=1e-12)


@pytest.mark.parametrize("u,c", [(TestFunction("bump", (0.3,), 1.2), -0.5),
                                 (TestFunction("shifted-bump", (0.0,), 0.5, y0=1.0), 1.0),
                                 (TestFunction("boundary-flat", (0.0,), 1.0, H=0.8), 1.0)])
def test_quadrature_against_adaptive(u, c):
    d = FunctionData(u)
    lo, hi, ylo, yhi = u.support_box()

    def f(y, x, grad):
        val, g = u.evaluate([[x, y]])
        return (np.sum(g ** 2) if grad else val[0] ** 3) * y ** c

    ref = dblquad(lambda y, x: f(y, x, False), lo[0], hi[0], ylo, yhi, epsabs=1e-12, epsrel=1e-10)[0]
    assert d.norm(3, c) == pytest.approx(ref ** (1 / 3), rel=1e-8)
    ref = dblquad(lambda y, x: f(y, x, True), lo[0], hi[0], ylo, yhi, epsabs=1e-12, epsrel=1e-10)[0]
    assert d.norm(2, c, gradient=True) == pytest.approx(ref ** 0.5, rel=1e-5)


def test_gradient_matches_finite_differences():
    for u in make_family(2, 9, seed=4):
        lo, hi, ylo, yhi = u.support_box()
        rng = np.random.default_rng(0)
        z = np.column_stack([rng.uniform(lo, hi, (20, 2)), rng.uniform(ylo + 1e-3, yhi, 20)])
        _, g = u.evaluate(z)
        h = 1e-6
        fd = np.stack([(u.evaluate(z + h * e)[0] - u.evaluate(z - h * e)[0]) / (2 * h) for e in np.eye(3)], axis=1)
        np.testing.assert_allclose(g, fd, atol=1e-5)


def test_boundary_flat_class():
    u = TestFunction("boundary-flat", (0.0,), 1.0, H=2.0)
    y = np.linspace(1e-6, u.delta, 50)
    _, g = u.evaluate(np.column_stack([np.full(50, 0.3), y]))
    assert np.all(g[:, -1] == 0)
    _, g = u.evaluate([[0.3, 1.0]])
    assert g[0, -1] != 0


@pytest.mark.parametrize("N,c", [(1, 1.0), (1, 2.5), (2, 0.0), (2, 1.0)])
def test_dilation_invariance(N, c):
    p = SobolevParams(N, c, float(sobolev_exponent(N, c)))
    opts = COARSE if N == 2 else QuadratureOptions()
    for u in make_family(N, 6, seed=1):
        q0 = quotient_sobolev(u, p, opts)
        for s in (0.5, 2.0):
            assert quotient_sobolev(u.dilate(s), p, opts) == pytest.approx(q0, rel=1e-6)


def test_regression_baseline():
    u = TestFunction("shifted-bump", (0.0, 0.0), 0.5, y0=1.0)
    assert quotient_sobolev(u, SobolevParams(2, 1.0, 4.0)) == pytest.approx(0.22173875125562814, rel=1e-9)


def test_zero_gradient_rejected():
    u = TestFunction("bump", (0.0,), 1e-30)
    with pytest.raises(ValueError):
        quotient_sobolev(u, SobolevParams(1, 1.0, 6.0))


def test_gn_reductions():
    N, c = 2, 1.0
    qc = float(sobolev_exponent(N, c))
    u = TestFunction("bump", (0.1, -0.2), 1.3)
    p = SobolevParams(N, c, qc)
    assert quotient_gn(u, p, opts=COARSE) == pytest.approx(quotient_sobolev(u, p, COARSE), rel=1e-12)
    p0 = SobolevParams(1, 0.0, 5.0)
    v = TestFunction("shifted-bump", (0.0,), 1.0, y0=2.5)
    assert quotient_gn(v, p0, "nu") == pytest.approx(quotient_gn(v, p0, "c"), rel=1e-12)


def test_gn_theta_range():
    with pytest.raises(ValueError):
        quotient_gn(TestFunction("bump", (0.0,), 1.0), SobolevParams(1, -0.5, math.inf))
    with pytest.raises(ValueError):
        quotient_gn(TestFunction("bump", (0.0,), 1.0), SobolevParams(1, 0.5, 4.0), theta=1.5)
    with pytest.raises(ValueError):
        quotient_gn(TestFunction("bump", (0.0,), 1.0), SobolevParams(1, 0.5, 4.0), measure="mu")


def test_gn_nu_scan_bounded():
    p = SobolevParams(1, -0.5, 4.0)
    vals = [quotient_gn(FunctionData(u), p, "nu") for u in make_family(1, 200, seed=0)]
    assert np.all(np.isfinite(vals)) and max(vals) < 10


@pytest.mark.parametrize("N,c,q", [(1, 1.0, 4.0), (1, 0.5, 3.0), (2, 0.0, 4.0), (2, 1.0, 3.0)])
def test_holder_chain(N, c, q):
    p = SobolevParams(N, c, q)
    opts = COARSE if N == 2 else QuadratureOptions()
    for u in make_family(N, 12, seed=2):
        lhs, rhs = holder_chain(FunctionData(u, opts), p)
        assert lhs <= rhs * (1 + 1e-12)


def test_mazya_relations():
    u = TestFunction("bump", (0.0,), 1.0)
    with pytest.raises(ValueError, match="beta = alpha - 1"):
        quotient_mazya(u, 0.5, 0.3, 4.0, p=2)
    with pytest.raises(ValueError, match="2 <= q"):
        quotient_mazya(u, 0.5, 0.0, 1.5, p=2)
    with pytest.raises(ValueError, match="beta > -1/q"):
        quotient_mazya(u, -0.9, -0.9 - 1 + 0.5 * 2, 2.0, p=1)
    with pytest.raises(ValueError, match="1 <= q"):
        quotient_mazya(u, 0.5, 0.5, 3.0, p=1)


@pytest.mark.parametrize("N,c", [(1, 1.0), (1, 0.5), (2, 1.0)])
def test_mazya2_instantiation(N, c):
    # alpha = c/2, beta = c/q satisfies the Maz'ya relation exactly when q = 2*_c
    q = float(sobolev_exponent(N, c))
    alpha, beta = c / 2, c / q
    assert math.isclose(beta, alpha - 1 + (N + 1) * (0.5 - 1 / q))
    opts = COARSE if N == 2 else QuadratureOptions()
    vals = []
    for u in make_family(N, 20, seed=3):
        d = FunctionData(u, opts)
        r = quotient_mazya(d, alpha, beta, q)
        assert quotient_mazya(FunctionData(u.dilate(2.0), opts), alpha, beta, q) == pytest.approx(r, rel=1e-6)
        vals.append(r)
    assert np.all(np.isfinite(vals))


def test_mazya_gradient_l1():
    N, q, alpha = 1, 1.5, 0.3
    beta = alpha - 1 + (q - 1) / q * (N + 1)
    u = TestFunction("shifted-bump", (0.0,), 0.5, y0=1.0)
    r = quotient_mazya(u, alpha, beta, q, p=1)
    assert r == pytest.approx(quotient_mazya(u.dilate(3.0), alpha, beta, q, p=1), rel=1e-6)


def test_local_embedding_r_scaling():
    N, c, q = 1, -0.5, 4.0
    fam = make_family(N, 40, seed=5, max_height=1.0)
    r1 = local_embedding_check(SobolevParams(N, c, q, r=1.0), fam)
    r2 = local_embedding_check(SobolevParams(N, c, q, r=2.0), [u.dilate(0.5) for u in fam])
    expo = 1 - (N + 1 + c) * (0.5 - 1 / q)
    assert r1.finite and r2.finite
    assert r2.empirical_sup == pytest.approx(2 ** expo * r1.empirical_sup, rel=1e-8)
    with pytest.raises(ValueError):
        local_embedding_check(SobolevParams(N, c, q, r=0.5), fam)
    with pytest.raises(ValueError):
        local_embedding_check(SobolevParams(N, c, q))


def test_local_embedding_n2():
    N, c = 2, -0.5
    q = 2 * (N + 1) / (N - 1)
    rep = local_embedding_check(SobolevParams(N, c, q, r=1.0), n=200, seed=0, opts=COARSE)
    assert rep.finite and len(rep.scan.quotients) == 200


def test_witness():
    with pytest.raises(ValueError):
        global_failure_witness(1, 0.5)
    w = global_failure_witness(2, -0.9)
    assert w.expected_exponent == pytest.approx(0.9 / 2.1)
    assert np.all(np.diff(w.quotients) > 0)
    assert w.exponent == pytest.approx(w.expected_exponent, abs=0.03)
    flat = global_failure_witness(2, -0.05)
    assert flat.exponent < 0.05
    # 2*_c is infinite here: the sup-norm quotient is asymptotically dilation invariant
    w1 = global_failure_witness(1, -0.5)
    assert w1.q == math.inf and math.isnan(w1.expected_exponent)
    assert w1.growth < 1.1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_family_supports(seed):
    for u in make_family(1, 6, seed=seed, max_height=1.5):
        assert u.support_box()[3] <= 1.5 * (1 + 1e-12)
        assert FunctionData(u).norm(2, 0.0) > 0
