import numpy as np
import pytest
from numpy.testing import assert_allclose

from mcflow.graph_calculus import (
    GraphFunction,
    SpaceTimeField,
    area_element_v,
    c01_profile,
    check_quadratic_bounds,
    graph_validity_threshold,
    linearized_L,
    mean_curvature_graph,
    nonlinearity_Q,
    nonlinearity_Q_t,
    nonlinearity_field,
    quadratic_scaling_profile,
    second_fundamental_form_norm,
    speed_w,
)
from mcflow.shared.errors import DomainError, GraphValidityError


def constant(geom, c):
    return GraphFunction(geom, np.full(geom.shape, c))


def shift_Q(x, R0=1.0):
    """Q of a constant shift x of a circle of radius R0."""
    return -x ** 2 / (R0 ** 2 * (R0 + x))


# ========== Area element, speed and curvature ==========

def test_zero_graph_is_the_base(circle, sphere):
    for geom in (circle, sphere):
        zero = constant(geom, 0.0)
        assert_allclose(area_element_v(zero).values, 1.0)
        assert_allclose(speed_w(zero).values, 1.0)


def test_constant_shift_area_element(circle):
    u = constant(circle, 0.1)
    assert_allclose(area_element_v(u).values, 1.1)
    assert_allclose(speed_w(u).values, 1.0)


def test_flat_graph_with_unit_slope(line):
    u = GraphFunction(line, np.sin(line.grid_points()))
    assert area_element_v(u).values[0] == pytest.approx(np.sqrt(2.0))
    assert speed_w(u).values[0] == pytest.approx(np.sqrt(2.0))


def test_base_mean_curvature(circle):
    assert_allclose(mean_curvature_graph(constant(circle, 0.0)).values, 1.0)


def test_polar_curvature_of_cosine(circle):
    u = GraphFunction(circle, 0.1 * np.cos(circle.grid_points()))
    assert mean_curvature_graph(u).values[0] == pytest.approx(1.32 / 1.331, rel=1e-10)


@pytest.mark.parametrize("x", [-0.2, 0.05, 0.25])
def test_shifted_circle_curvature(circle, x):
    assert_allclose(mean_curvature_graph(constant(circle, x)).values, 1.0 / (1.0 + x))


def test_sphere_second_fundamental_form(sphere):
    u = constant(sphere, 0.2)
    assert_allclose(mean_curvature_graph(u).values, 2.0 / 1.2, rtol=1e-10)
    assert_allclose(second_fundamental_form_norm(u).values, np.sqrt(2.0) / 1.2, rtol=1e-10)


# ========== Linear operator and nonlinearity ==========

def test_linear_operator_on_constants(circle, line):
    assert_allclose(linearized_L(constant(circle, 0.3)).values, 0.3)
    assert_allclose(linearized_L(constant(line, 0.3)).values, 0.0, atol=1e-14)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_linear_operator_on_eigenfunctions(circle, k):
    u = np.cos(k * circle.grid_points())
    assert_allclose(linearized_L(GraphFunction(circle, u)).values, (1 - k ** 2) * u, atol=1e-10)


def test_nonlinearity_vanishes_at_zero(circle, line):
    for geom in (circle, line):
        assert_allclose(nonlinearity_Q(constant(geom, 0.0)).values, 0.0, atol=1e-14)


def test_nonlinearity_of_constant_shift(circle):
    assert_allclose(nonlinearity_Q(constant(circle, 0.1)).values, shift_Q(0.1), rtol=1e-10)
    assert shift_Q(0.1) == pytest.approx(-0.0090909, rel=1e-5)


def test_flat_nonlinearity_of_sine(line):
    u = GraphFunction(line, 0.1 * np.sin(line.grid_points()))
    # x = pi/4 sits at index N/8
    assert nonlinearity_Q(u).values[16] == pytest.approx(3.5180e-4, rel=1e-4)


def test_evolving_nonlinearity_matches_static_at_start(circle, shrinking_circle):
    u = constant(circle, 0.05)
    assert_allclose(nonlinearity_Q_t(u, shrinking_circle, 0.0).values, shift_Q(0.05), rtol=1e-10)
    assert_allclose(nonlinearity_Q_t(constant(circle, 0.0), shrinking_circle, 0.04).values, 0.0, atol=1e-13)


def test_concentric_difference_has_zero_residual(circle, shrinking_circle):
    times = np.linspace(0.0, 0.04, 5)
    R = shrinking_circle.radius(times)
    x = np.sqrt(1.05 ** 2 - 2.0 * times) - R
    field = SpaceTimeField(circle, times, np.repeat(x[:, None], circle.grid_size, axis=1), shrinking_circle)
    Q = nonlinearity_field(field).values
    # u_t = L_t u + Q_t(u) with L_t u = u / R^2 for spatially constant u
    u_t = -1.0 / np.sqrt(1.05 ** 2 - 2.0 * times) + 1.0 / R
    assert_allclose(Q[:, 0], u_t - x / R ** 2, atol=1e-12)


def test_nonlinearity_rejects_large_graphs(circle):
    with pytest.raises(GraphValidityError):
        nonlinearity_Q(constant(circle, 0.5))


def test_validity_error_reports_first_failing_time(circle):
    times = np.array([0.0, 0.1, 0.2])
    values = np.zeros((3, circle.grid_size))
    values[1:] = 0.4
    with pytest.raises(GraphValidityError) as excinfo:
        nonlinearity_field(SpaceTimeField(circle, times, values))
    assert excinfo.value.time == pytest.approx(0.1)


def test_validity_threshold(circle, line):
    assert graph_validity_threshold(circle) == pytest.approx(0.3)
    assert graph_validity_threshold(line) == pytest.approx(0.3)
    assert graph_validity_threshold(circle, 0.5) == pytest.approx(0.15)


# ========== Quadratic bounds ==========

def test_quadratic_bounds_at_zero(circle):
    report = check_quadratic_bounds(constant(circle, 0.0), constant(circle, 0.0), 0.0)
    assert report.passed
    assert report.max_abs_Q == 0.0


def test_difference_of_constant_shifts(circle):
    report = check_quadratic_bounds(constant(circle, 0.1), constant(circle, 0.05), 10.0)
    assert report.max_abs_dQ == pytest.approx(abs(shift_Q(0.1) - shift_Q(0.05)), rel=1e-10)
    assert report.passed


def test_quadratic_scaling(circle):
    u = GraphFunction(circle, np.cos(2 * circle.grid_points()))
    small, smaller = quadratic_scaling_profile(u, [1e-2, 1e-3])
    assert abs(small - smaller) / smaller < 0.05


def test_mismatched_bases_rejected(circle, line):
    with pytest.raises(DomainError):
        check_quadratic_bounds(constant(circle, 0.0), constant(line, 0.0), 1.0)


# ========== Fields ==========

def test_c01_profile_of_cosine():
    from mcflow.geometry import make_base

    geom = make_base("circle", 1, 1.0, 96)
    f = 0.01 * np.cos(3 * geom.grid_points())
    assert float(c01_profile(geom, f)) == pytest.approx(0.04, rel=1e-10)


def test_values_must_match_grid(circle):
    with pytest.raises(DomainError):
        GraphFunction(circle, np.zeros(10))


def test_time_grid_must_start_at_zero(circle):
    with pytest.raises(DomainError):
        SpaceTimeField.zeros(circle, [0.1, 0.2])


def test_field_arithmetic_and_restrict(small_circle):
    times = np.linspace(0.0, 0.1, 11)
    a = SpaceTimeField.from_function(small_circle, times, lambda x, t: np.cos(x) * t)
    b = a.scaled(2.0)
    assert_allclose((b - a).values, a.values)
    assert a.restrict(0.05).times[-1] == pytest.approx(0.05)
    with pytest.raises(DomainError):
        a + SpaceTimeField.zeros(small_circle, np.linspace(0.0, 0.1, 5))


def test_snapshot_frame_keeps_last_slice(small_circle):
    times = np.linspace(0.0, 0.1, 6)
    frame = SpaceTimeField.zeros(small_circle, times).to_frame(stride=2)
    assert list(frame.columns) == ["t", "grid_index", "theta_or_coords", "u"]
    assert sorted(set(frame["t"])) == pytest.approx([0.0, 0.04, 0.08, 0.1])
    assert len(frame) == 4 * small_circle.grid_size


def test_snapshot_frame_on_sphere(sphere):
    frame = SpaceTimeField.zeros(sphere, [0.0, 0.01]).to_frame()
    assert len(frame) == 2 * sphere.shape[0] * sphere.shape[1]
    assert frame["theta_or_coords"].iloc[0].count(";") == 1
