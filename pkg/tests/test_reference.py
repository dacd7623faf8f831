import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import ive

from halfspace_heat.reference import bessel_heat_kernel, bessel_i_scaled, product_kernel, reflected_gaussian


def test_half_integer_orders():
    x = 1.0
    assert bessel_i_scaled(0.5, x) == pytest.approx(np.sqrt(2 / (np.pi * x)) * np.sinh(x) * np.exp(-x), rel=1e-12)
    x = 2.0
    assert bessel_i_scaled(-0.5, x) == pytest.approx(np.sqrt(2 / (np.pi * x)) * np.cosh(x) * np.exp(-x), rel=1e-12)
    x = 50.0
    assert bessel_i_scaled(-0.5, x) == pytest.approx(np.sqrt(2 / (np.pi * x)) * 0.5 * (1 + np.exp(-2 * x)),
                                                     rel=1e-12)


def test_zero_argument():
    assert bessel_i_scaled(0.0, 0.0) == 1.0
    assert bessel_i_scaled(1.3, 0.0) == 0.0
    assert bessel_i_scaled(-0.5, 0.0) == np.inf
    with pytest.raises(ValueError):
        bessel_i_scaled(-1.0, 1.0)
    with pytest.raises(ValueError):
        bessel_i_scaled(0.5, -1.0)


@pytest.mark.parametrize("nu", [-0.75, -0.25, 0.0, 0.25, 0.5, 1.5, 2.5, 7.0])
def test_seam_continuity(nu):
    lo, hi = bessel_i_scaled(nu, 30.0), bessel_i_scaled(nu, np.nextafter(30.0, 31))
    assert hi == pytest.approx(lo, rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(nu=st.floats(-0.99, 10), x=st.floats(1e-8, 200))
def test_matches_scipy(nu, x):
    assert bessel_i_scaled(nu, x) == pytest.approx(ive(nu, x), rel=1e-10, abs=1e-300)


def test_c0_is_reflected_gaussian():
    t, y1 = 0.7, 1.3
    y2 = np.linspace(0.01, 8, 400)
    np.testing.assert_allclose(bessel_heat_kernel(t, y1, y2, 0.0), reflected_gaussian(t, y1, y2), rtol=1e-10)


@pytest.mark.parametrize("t,y1,c", [(0.5, 1.0, 1.0), (1.0, 0.3, -0.5), (2.0, 2.0, 2.5)])
def test_normalization(t, y1, c):
    val, _ = quad(lambda u: bessel_heat_kernel(t, y1, u, c) * u ** c, 0, np.inf, limit=400, epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-0.9, 3), s=st.floats(0.2, 5), y1=st.floats(0.05, 4), y2=st.floats(0.05, 4))
def test_scaling_and_symmetry(c, s, y1, y2):
    t = 0.6
    k = bessel_heat_kernel(t, y1, y2, c)
    assert bessel_heat_kernel(s * s * t, s * y1, s * y2, c) == pytest.approx(s ** (-(1 + c)) * k, rel=1e-10)
    assert bessel_heat_kernel(t, y2, y1, c) == k
    assert k > 0


@pytest.mark.parametrize("c", [-0.5, 0.5, 2.0])
def test_chapman_kolmogorov(c):
    t, s, y1, y2 = 0.3, 0.5, 0.8, 1.7
    val, _ = quad(lambda u: bessel_heat_kernel(t, y1, u, c) * bessel_heat_kernel(s, u, y2, c) * u ** c,
                  0, np.inf, limit=400, epsabs=1e-14)
    assert val == pytest.approx(bessel_heat_kernel(t + s, y1, y2, c), rel=1e-6)


def test_small_time_concentration():
    c, y1, delta = 0.5, 1.0, 0.3
    masses = [quad(lambda u: bessel_heat_kernel(t, y1, u, c) * u ** c, y1 - delta, y1 + delta,
                   points=[y1], limit=200)[0] for t in (0.1, 0.01, 0.001)]
    assert masses[0] < masses[1] < masses[2] <= 1 + 1e-9
    assert masses[2] > 1 - 1e-9


def test_product_kernel():
    t = 0.4
    z1, z2 = np.array([0.2, 1.0]), np.array([[0.5, 0.7], [-1.0, 2.0]])
    g = np.exp(-(z1[0] - z2[:, 0]) ** 2 / (4 * t)) / np.sqrt(4 * np.pi * t)
    np.testing.assert_allclose(product_kernel(t, z1, z2, 1.0), g * bessel_heat_kernel(t, 1.0, z2[:, 1], 1.0))
    assert product_kernel(t, [1.0], [2.0], 0.7) == pytest.approx(bessel_heat_kernel(t, 1.0, 2.0, 0.7))
    np.testing.assert_allclose(product_kernel(t, z1, z2, 0.0), g * reflected_gaussian(t, 1.0, z2[:, 1]))
    with pytest.raises(ValueError):
        product_kernel(t, z1, [1.0], 0.0)


def test_kernel_rejects():
    with pytest.raises(ValueError):
        bessel_heat_kernel(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        bessel_heat_kernel(1.0, 0.0, 1.0, 0.0)
