import numpy as np
import pytest
from numpy.testing import assert_allclose

from mcflow.duhamel import (
    constant_source_probe,
    duhamel_convolve,
    duhamel_physical_check,
    gradient_growth_probe,
    initial_data_probe,
    operator_norm_probe,
    pde_residual,
    potential_splitting_residual,
    propagate_field,
    propagate_initial,
    random_source,
)
from mcflow.geometry import make_base
from mcflow.graph_calculus import GraphFunction, SpaceTimeField
from mcflow.heat_kernels import make_kernel
from mcflow.shared.errors import DomainError


def constant_source(geom, times, c=1.0):
    times = np.asarray(times, dtype=float)
    return SpaceTimeField(geom, times, np.full((times.size,) + geom.shape, c))


# ========== Propagation ==========

def test_propagate_eigenfunction(circle):
    f0 = GraphFunction(circle, np.cos(3 * circle.grid_points()))
    out = propagate_initial(make_kernel("G", circle), f0, 0.1)
    assert np.max(out.values) == pytest.approx(0.4065697, rel=1e-7)
    assert_allclose(out.values, np.exp(-0.9) * f0.values, atol=1e-13)


def test_propagate_constant_under_potential(circle):
    f0 = GraphFunction(circle, np.full(circle.shape, 0.3))
    out = propagate_initial(make_kernel("K", circle), f0, 0.1)
    assert_allclose(out.values, 0.3 * np.exp(0.1), rtol=1e-12)


def test_propagate_zero(circle):
    out = propagate_initial(make_kernel("K", circle), GraphFunction(circle, np.zeros(circle.shape)), 0.1)
    assert not np.any(out.values)


def test_propagation_needs_positive_time(circle):
    with pytest.raises(DomainError):
        propagate_initial(make_kernel("G", circle), GraphFunction(circle, np.zeros(circle.shape)), 0.0)


def test_propagate_field_starts_at_data(circle):
    f0 = np.cos(circle.grid_points())
    field = propagate_field(make_kernel("G", circle), f0, np.linspace(0.0, 0.1, 5))
    assert_allclose(field.values[0], f0)


# ========== Duhamel convolution ==========

def test_constant_source_under_heat_kernel(circle):
    times = np.linspace(0.0, 0.1, 11)
    out = duhamel_convolve(make_kernel("G", circle), constant_source(circle, times, 2.0))
    assert_allclose(out.values[:, 0], 2.0 * times, atol=1e-13)


def test_constant_source_under_potential(circle):
    times = np.linspace(0.0, 0.1, 11)
    out = duhamel_convolve(make_kernel("K", circle), constant_source(circle, times))
    assert out.values[-1, 0] == pytest.approx(np.expm1(0.1), rel=1e-10)
    assert_allclose(out.values[:, 5], np.expm1(times), rtol=1e-10)


def test_zero_source(circle):
    times = np.linspace(0.0, 0.1, 11)
    out = duhamel_convolve(make_kernel("K", circle), SpaceTimeField.zeros(circle, times))
    assert not np.any(out.values)


def test_linear_in_time_source(circle):
    times = np.linspace(0.0, 0.1, 11)
    F = SpaceTimeField.from_function(circle, times, lambda x, t: np.cos(2 * x) * t)
    out = duhamel_convolve(make_kernel("G", circle), F)
    expected = 0.1 / 4.0 - (1.0 - np.exp(-0.4)) / 16.0
    assert out.values[-1, 0] == pytest.approx(expected, rel=1e-9)


def test_source_on_another_base_rejected(circle, small_circle):
    with pytest.raises(DomainError):
        duhamel_convolve(make_kernel("G", circle), constant_source(small_circle, [0.0, 0.1]))


@pytest.mark.parametrize("source", ["constant", "cos2"])
def test_spectral_matches_direct_quadrature(small_circle, source):
    times = np.linspace(0.0, 0.1, 11)
    if source == "constant":
        F = constant_source(small_circle, times, 0.7)
    else:
        F = SpaceTimeField.from_function(small_circle, times, lambda x, t: np.cos(2 * x) * t)
    report = duhamel_physical_check(make_kernel("G", small_circle), F, [(10, 0), (5, 7)])
    assert report.max_rel_deviation < 1e-6
    assert report.fine_grid_size == 16 * small_circle.grid_size


def test_direct_quadrature_band_keeps_the_heat_step(small_circle):
    times = np.linspace(0.0, 0.1, 11)
    F = SpaceTimeField.from_function(small_circle, times, lambda x, t: np.cos(4 * x) * t)
    report = duhamel_physical_check(make_kernel("G", small_circle), F, [(10, 0)])
    assert report.band == pytest.approx((2 * np.pi / 512) ** 2)
    assert report.max_rel_deviation < 1e-6


def test_mild_solution_solves_the_equation(circle):
    times = np.linspace(0.0, 0.1, 101)
    kernel = make_kernel("G", circle)
    assert pde_residual(kernel, np.cos(2 * circle.grid_points()), constant_source(circle, times)) < 1e-4


def test_potential_splitting(circle, rng):
    K = make_kernel("K", circle)
    f0 = circle.random_field(rng, 4)
    assert potential_splitting_residual(K, f0, np.linspace(0.0, 0.1, 41)) < 1e-6
    with pytest.raises(DomainError):
        potential_splitting_residual(make_kernel("G", circle), f0, np.linspace(0.0, 0.1, 41))


# ========== Probes ==========

def test_operator_norm_probe():
    geom = make_base("circle", 1, 1.0, 64)
    times = np.linspace(0.0, 0.04, 65)
    fit = operator_norm_probe(make_kernel("G", geom), 4, 3, times)
    assert fit.operator == "C1"
    assert fit.samples == 4
    assert np.all(np.isfinite(fit.ratios))
    # duhamel(1) = t: |t|_X / |1|_Y = T / sqrt(T)
    assert fit.ratios[0] == pytest.approx(0.2, rel=1e-6)
    assert fit.C_fit == max(fit.ratios)
    assert operator_norm_probe(make_kernel("G", geom), 4, 3, times).ratios == fit.ratios


@pytest.mark.slow
def test_operator_norm_fit_stable_under_sample_doubling():
    geom = make_base("circle", 1, 1.0, 64)
    times = np.linspace(0.0, 0.04, 65)
    kernel = make_kernel("G", geom)
    fit20 = operator_norm_probe(kernel, 20, 17, times)
    fit40 = operator_norm_probe(kernel, 40, 17, times)
    assert fit40.ratios[:20] == fit20.ratios
    assert np.isfinite(fit40.C_fit)
    assert fit40.C_fit <= 1.1 * fit20.C_fit


def test_evolving_operator_probe_is_C4(shrinking_circle):
    times = np.linspace(0.0, 0.04, 65)
    fit = operator_norm_probe(make_kernel("K_evolving", shrinking_circle), 2, 0, times, bandlimit=4)
    assert fit.operator == "C4"
    assert np.isfinite(fit.C_fit)


def test_constant_source_probe(circle):
    report = constant_source_probe(make_kernel("K", circle), 1.0, [0.01, 0.02, 0.04])
    assert report.exponent == pytest.approx(1.0, abs=0.05)
    assert report.C_fit == pytest.approx(np.expm1(0.04) / 0.2, rel=1e-6)


def test_constant_source_probe_on_flat(line):
    assert constant_source_probe(make_kernel("K", line), 0.0, [0.01, 0.02]).C_fit == 0.0


def test_initial_data_probe(circle):
    times = np.linspace(0.0, 0.04, 65)
    fit = initial_data_probe(make_kernel("K", circle), 3, 1, times)
    assert fit.operator == "C6"
    assert fit.ratios[0] == pytest.approx(np.exp(0.04), rel=1e-9)


def test_gradient_growth_needs_curvature(line):
    with pytest.raises(DomainError):
        gradient_growth_probe(make_kernel("G", line), 2, 0, np.linspace(0.0, 0.1, 11))


def test_gradient_growth_is_finite(circle):
    fit = gradient_growth_probe(make_kernel("K", circle), 3, 0, np.linspace(0.0, 0.1, 11))
    assert fit.operator == "gradient_growth"
    assert 0.0 <= fit.C_fit < np.inf


def test_random_source_is_seeded(circle):
    times = np.linspace(0.0, 0.1, 5)
    a = random_source(circle, times, np.random.default_rng(9), bandlimit=4)
    b = random_source(circle, times, np.random.default_rng(9), bandlimit=4)
    assert_allclose(a.values, b.values)
