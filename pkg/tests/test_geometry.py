import numpy as np
import pytest
from numpy.testing import assert_allclose

from mcflow.geometry import (
    GeometryKind,
    ball_volume,
    check_ball_volume_bounds,
    conformal_time,
    geodesic_distance,
    make_base,
    make_evolving,
    shrink_radius,
)
from mcflow.shared.errors import DomainError, UnsupportedOrderError


# ========== make_base ==========

def test_unit_circle_curvature():
    geom = make_base("circle", 1, 1.0, 128)
    assert geom.A2 == pytest.approx(1.0)
    assert geom.H0 == pytest.approx(1.0)
    assert geom.kappa == pytest.approx(1.0)


def test_flat_line_has_no_curvature(line):
    assert line.A2 == 0.0
    assert line.H0 == 0.0
    assert not line.is_curved


def test_sphere_radius_two():
    geom = make_base("sphere", 2, 2.0, 64)
    assert geom.A2 == pytest.approx(0.5)
    assert geom.H0 == pytest.approx(1.0)
    assert geom.shape == (32, 64)


def test_dimension_derived_from_kind():
    assert make_base("periodic_plane", None, 1.0, 16).n == 2


@pytest.mark.parametrize(
    "kind, n, length, N",
    [
        ("circle", 2, 1.0, 64),
        ("sphere", 1, 1.0, 64),
        ("circle", 1, 1.0, 63),
        ("circle", 1, 1.0, 8),
        ("circle", 1, 0.0, 64),
        ("torus", 2, 1.0, 64),
    ],
)
def test_make_base_rejects_bad_parameters(kind, n, length, N):
    with pytest.raises(DomainError):
        make_base(kind, n, length, N)


def test_flat_has_no_radius(line):
    with pytest.raises(DomainError):
        line.radius


# ========== Distances and volumes ==========

def test_circle_antipodal_distance(circle):
    assert geodesic_distance(circle, 0.0, np.pi) == pytest.approx(np.pi)


def test_circle_distance_wraps(circle):
    assert geodesic_distance(circle, 0.0, 1.5 * np.pi) == pytest.approx(0.5 * np.pi)


def test_sphere_pole_to_equator():
    geom = make_base("sphere", 2, 2.0, 32)
    assert geodesic_distance(geom, [0.0, 0.0], [0.5 * np.pi, 1.0]) == pytest.approx(np.pi)


def test_distance_is_symmetric(plane, rng):
    x = rng.uniform(0, 2 * np.pi, size=(10, 2))
    y = rng.uniform(0, 2 * np.pi, size=(10, 2))
    assert_allclose(geodesic_distance(plane, x, y), geodesic_distance(plane, y, x))


def test_ball_volumes(circle, plane):
    assert ball_volume(circle, 0.0, 0.5) == pytest.approx(1.0)
    assert ball_volume(plane, [0.0, 0.0], 0.5) == pytest.approx(np.pi * 0.25)
    unit_sphere = make_base("sphere", 2, 1.0, 32)
    assert ball_volume(unit_sphere, [0.0, 0.0], 0.5) == pytest.approx(2 * np.pi * (1 - np.cos(0.5)), rel=1e-7)


def test_ball_volume_rejects_large_radius(circle):
    with pytest.raises(DomainError):
        ball_volume(circle, 0.0, 4.0)


def test_ball_volume_bounds_hold(circle, sphere):
    for geom in (circle, sphere):
        passed, lo, hi = check_ball_volume_bounds(geom)
        assert passed
        assert 0.5 <= lo <= hi <= 2.0


# ========== Spectral calculus ==========

def test_modes_round_trip(sphere, rng):
    values = sphere.random_field(rng, 6)
    assert_allclose(sphere.from_modes(sphere.to_modes(values)), values, atol=1e-12)


def test_laplacian_of_eigenfunction(circle):
    u = circle.eigenfunction(3)
    assert_allclose(circle.laplacian(u), -9.0 * u, atol=1e-10)


def test_sphere_laplacian_of_harmonic(sphere):
    u = sphere.eigenfunction((2, 1))
    assert_allclose(sphere.laplacian(u), -6.0 * u, atol=1e-9)


def test_gradient_norm_of_cosine(circle):
    u = 0.01 * np.cos(4 * circle.grid_points())
    assert np.max(circle.derivative_norm(u, 1)) == pytest.approx(0.04, rel=1e-10)


def test_third_derivative_unavailable_on_sphere(sphere):
    with pytest.raises(UnsupportedOrderError):
        sphere.derivative_norm(np.zeros(sphere.shape), 3)


def test_quadrature_integrates_area(sphere, plane):
    assert sphere.volume() == pytest.approx(4.0 * np.pi)
    assert plane.volume() == pytest.approx((2.0 * np.pi) ** 2)


# ========== Evolving bases ==========

def test_shrinking_circle_radius(circle):
    evolving = make_evolving(circle, 0.3)
    assert shrink_radius(evolving, 0.25) == pytest.approx(0.7071068, rel=1e-7)
    assert shrink_radius(evolving, 0.0) == pytest.approx(1.0)
    assert conformal_time(evolving, 0.0) == 0.0


def test_shrinking_sphere_conformal_time():
    evolving = make_evolving(make_base("sphere", 2, 1.0, 32), 0.2)
    assert evolving.radius(0.125) == pytest.approx(np.sqrt(0.5))
    assert evolving.conformal_time(0.125) == pytest.approx(np.log(2) / 4, rel=1e-10)


def test_evolving_rejects_horizon_past_extinction(circle):
    with pytest.raises(DomainError):
        make_evolving(circle, 0.5)


def test_evolving_rejects_flat_base(line):
    with pytest.raises(DomainError):
        make_evolving(line, 0.1)


def test_metric_equivalence_constant(shrinking_circle):
    assert shrinking_circle.metric_equivalence_constant() == pytest.approx(1.0 / 0.9)
    assert shrinking_circle.geometry_at(0.05).kind == GeometryKind.CIRCLE
