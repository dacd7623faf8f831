import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfspace_heat.domain import (GridSpec, PhiParams, build_grid, discrete_delta, eta, interpolated_delta,
                                   phi_derivative_constant, weight_phi, weight_phi_derivative, weighted_norm)


def test_single_cell_volumes():
    assert build_grid(GridSpec(N=0, Ly=1, ny=1, c=0, grading=1)).volumes[0] == pytest.approx(1.0, abs=1e-15)
    assert build_grid(GridSpec(N=0, Ly=1, ny=1, c=1, grading=1)).volumes[0] == pytest.approx(0.5, abs=1e-15)


def test_graded_total_measure():
    g = build_grid(GridSpec(N=1, Lx=1, nx=2, Ly=1, ny=2, c=-0.5, grading=2))
    np.testing.assert_allclose(g.y_faces, [0, 0.25, 1])
    # 2 * int_0^1 y^(-1/2) dy
    assert g.volumes.sum() == pytest.approx(4.0, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(0, 2), c=st.floats(-0.95, 3), Ly=st.floats(0.5, 20), ny=st.integers(1, 40),
       grading=st.floats(1, 3))
def test_total_measure_exact(N, c, Ly, ny, grading):
    g = build_grid(GridSpec(N=N, Ly=Ly, ny=ny, c=c, Lx=1.5, nx=4, grading=grading))
    assert np.all(g.volumes > 0)
    assert g.volumes.sum() == pytest.approx(g.total_measure(), rel=1e-12)
    assert g.y[0] > 0 and np.all(np.diff(g.y) > 0)
    assert np.all(g.y_faces[:-1] < g.y) and np.all(g.y < g.y_faces[1:])


@pytest.mark.parametrize("bad", [dict(c=-1.0), dict(c=-2.0), dict(Ly=0.0), dict(grading=0.5), dict(ny=0)])
def test_gridspec_rejects(bad):
    kw = dict(N=0, Ly=1.0, ny=4, c=0.0)
    kw.update(bad)
    with pytest.raises(ValueError):
        GridSpec(**kw)


def test_weighted_norm_examples():
    g = build_grid(GridSpec(N=0, Ly=1, ny=1, c=1, grading=1))
    assert weighted_norm(np.ones(1), 2, g) == pytest.approx(np.sqrt(0.5))
    for p in (1, 2, 3.5, np.inf):
        assert weighted_norm(np.zeros(1), p, g) == 0
    with pytest.raises(ValueError):
        weighted_norm(np.ones(1), 0.5, g)


def test_weighted_norm_quadrature():
    g = build_grid(GridSpec(N=0, Ly=1, ny=2000, c=0, grading=1))
    assert weighted_norm(g.y, 2, g) == pytest.approx(np.sqrt(1 / 3), rel=1e-6)


def test_phi_examples():
    for c in (-0.5, 0.3, 2.0):
        assert weight_phi(0.3, PhiParams(c)) == 1.0
    assert weight_phi(4.0, PhiParams(2.0)) == pytest.approx(0.25, abs=1e-15)
    y = np.geomspace(1e-3, 1e3, 50)
    np.testing.assert_array_equal(weight_phi(y, PhiParams(0.0)), 1.0)
    with pytest.raises(ValueError):
        weight_phi(0.0, PhiParams(1.0))


def test_eta_plateaus_and_smoothness():
    y = np.linspace(0, 3, 3001)
    e = eta(y)
    assert np.all(e[y <= 0.5] == 1) and np.all(e[y >= 2] == 0)
    assert np.all((e >= 0) & (e <= 1))
    # C^2: second differences stay bounded at the knots
    d2 = np.diff(e, 2) / (y[1] - y[0]) ** 2
    assert np.abs(d2).max() < 10


@pytest.mark.parametrize("c", [-0.9, -0.5, 1.0, 3.0])
def test_phi_equivalence_bounds(c):
    y = np.geomspace(1e-4, 1e4, 2001)
    ratio = weight_phi(y, PhiParams(c)) / (y ** (-c / 2) * np.minimum(1, y) ** (c / 2))
    assert 0.2 < ratio.min() and ratio.max() < 5


@pytest.mark.parametrize("c", [-0.5, 1.0, 3.0])
def test_phi_derivative(c):
    p = PhiParams(c)
    y = np.linspace(0.1, 5, 2001)
    fd = np.gradient(weight_phi(y, p), y)
    np.testing.assert_allclose(weight_phi_derivative(y, p)[5:-5], fd[5:-5], atol=1e-4)
    C0 = phi_derivative_constant(p)
    assert np.isfinite(C0) and C0 >= abs(c) / 2 - 1e-12


def test_discrete_delta():
    g = build_grid(GridSpec(N=1, Ly=2, ny=8, c=1, Lx=1, nx=4, grading=2))
    d1, d2 = discrete_delta(g, [0.1, 0.5]), discrete_delta(g, [-0.6, 1.5])
    assert weighted_norm(d1, 1, g) == pytest.approx(1.0)
    assert not np.any((d1 != 0) & (d2 != 0))
    i = g.cell_index([0.1, 0.5])
    assert d1.max() == pytest.approx(1 / g.volumes[i])
    with pytest.raises(ValueError):
        discrete_delta(g, [2.0, 0.5])


def test_interpolated_delta_reproduces_linear():
    g = build_grid(GridSpec(N=1, Ly=2, ny=10, c=0.5, Lx=1, nx=10, grading=1.5))
    z = np.array([0.13, 0.77])
    f = interpolated_delta(g, z)
    assert np.sum(f * g.volumes) == pytest.approx(1.0)
    lin = 2 * g.coordinates()[:, 0] - 3 * g.coordinates()[:, 1] + 1
    assert np.sum(f * lin * g.volumes) == pytest.approx(2 * z[0] - 3 * z[1] + 1)


def test_validity_mask():
    g = build_grid(GridSpec(N=1, Ly=6, ny=30, c=0, Lx=6, nx=30, grading=1))
    m = g.validity_mask(1.0).reshape(g.shape)
    assert m[15, 0] and not m[0, 0] and not m[15, -1]
