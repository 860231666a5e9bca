import numpy as np
import pytest

from mcflow import heat_kernels
from mcflow.geometry import make_evolving
from mcflow.heat_kernels import (
    BoundSampleSpec,
    KernelTag,
    certify_gaussian_bound,
    eval_kernel,
    kernel_derivative,
    kernel_mass,
    make_kernel,
    off_diagonal_slack,
    pde_residual,
    representation_gap,
    semigroup_residual,
)
from mcflow.shared.errors import DomainError, TruncationError, UnsupportedOrderError

DIAGONAL_AT_UNIT_TIME = (1 + 2 * np.sum(np.exp(-np.arange(1, 40) ** 2.0))) / (2 * np.pi)


# ========== Evaluation ==========

def test_circle_heat_kernel_on_diagonal(circle):
    G = make_kernel("G", circle)
    assert float(eval_kernel(G, 0.0, 1.0, 0.0, 0.0)) == pytest.approx(DIAGONAL_AT_UNIT_TIME, rel=1e-10)


def test_potential_multiplies_by_exponential(circle):
    K = make_kernel("K", circle)
    assert float(K.evaluate(0.0, 1.0, 0.0, 0.0)) == pytest.approx(np.e * DIAGONAL_AT_UNIT_TIME, rel=1e-10)


@pytest.mark.parametrize("tag", ["G", "K"])
def test_kernel_is_symmetric(circle, rng, tag):
    ev = make_kernel(tag, circle)
    x, y = rng.uniform(0, 2 * np.pi, 20), rng.uniform(0, 2 * np.pi, 20)
    np.testing.assert_allclose(ev.evaluate(x, 0.3, y, 0.1), ev.evaluate(y, 0.3, x, 0.1), rtol=1e-12)


def test_image_sum_matches_series(circle):
    assert representation_gap(make_kernel("G", circle), [0.05, 0.1, 0.2]) < 1e-9


def test_series_truncation_is_reported(circle):
    G = make_kernel("G", circle, max_modes=8)
    with pytest.raises(TruncationError):
        G.evaluate(0.0, 0.1, 0.0, 0.0)


def test_source_time_must_precede_target(circle):
    G = make_kernel("G", circle)
    with pytest.raises(DomainError):
        G.evaluate(0.0, 0.1, 0.0, 0.1)


def test_evolving_tag_needs_evolving_geometry(circle, shrinking_circle):
    with pytest.raises(DomainError):
        make_kernel("G_evolving", circle)
    assert make_kernel(KernelTag.K_EVOLVING, shrinking_circle).tag.evolving


# ========== Mass ==========

def test_heat_kernel_mass_is_one(circle, sphere):
    for geom in (circle, sphere):
        assert kernel_mass(make_kernel("G", geom), geom.grid_points()[(0,) * len(geom.shape)], 0.1, 0.0) == pytest.approx(
            1.0, abs=1e-10
        )


def test_schrodinger_kernel_mass(circle):
    assert kernel_mass(make_kernel("K", circle), 0.0, 0.1, 0.0) == pytest.approx(np.exp(0.1), abs=1e-8)


def test_evolving_kernel_mass(circle):
    K = make_kernel("K_evolving", make_evolving(circle, 0.3))
    assert kernel_mass(K, 0.0, 0.25, 0.0) == pytest.approx(1.4142136, rel=1e-7)
    assert float(K.mass_factor(0.25, 0.0)) == pytest.approx(np.sqrt(2.0))


# ========== Derivatives and PDE ==========

def test_gradient_vanishes_on_diagonal(circle):
    assert float(kernel_derivative(make_kernel("G", circle), 1, 0.0, 0.1, 0.0, 0.0)) == pytest.approx(0.0, abs=1e-12)


def test_gradient_quarter_turn(circle):
    k = np.arange(1, 21)
    expected = -np.sum(k * np.exp(-0.1 * k ** 2) * np.sin(k * np.pi / 2)) / np.pi
    value = float(kernel_derivative(make_kernel("G", circle), 1, np.pi / 2, 0.1, 0.0, 0.0))
    assert value == pytest.approx(expected, rel=1e-10)


def test_hessian_integrates_to_zero(circle):
    G = make_kernel("G", circle)
    values = kernel_derivative(G, 2, circle.grid_points(), 0.1, 0.0, 0.0)
    assert abs(circle.integrate(values)) < 1e-10


def test_second_derivative_of_K_unsupported(circle):
    with pytest.raises(UnsupportedOrderError):
        kernel_derivative(make_kernel("K", circle), 2, 0.0, 0.1, 0.0, 0.0)


@pytest.mark.parametrize("tag", ["G", "K"])
def test_kernel_solves_its_equation(circle, tag):
    assert pde_residual(make_kernel(tag, circle), 0.1, 0.0) < 1e-6


def test_evolving_kernel_solves_its_equation(shrinking_circle):
    for tag in ("G_evolving", "K_evolving"):
        assert pde_residual(make_kernel(tag, shrinking_circle), 0.05, 0.0) < 1e-6


def test_semigroup_property(circle):
    assert semigroup_residual(make_kernel("K", circle), 0.3, 0.15, 0.0) < 1e-8


# ========== Gaussian bound certificates ==========

def test_heat_kernel_bound_passes(circle):
    cert = certify_gaussian_bound(make_kernel("G", circle), 0, 2.0)
    assert cert.passed
    assert cert.positive
    assert 0.28 < cert.C < 0.30
    assert cert.name == "gaussian_bound[G,order=0]"
    assert cert.model_dump(by_alias=True)["pass"] is True


@pytest.mark.parametrize("order", [1, 2])
def test_heat_kernel_derivative_bounds_pass(circle, order):
    assert certify_gaussian_bound(make_kernel("G", circle), order, 2.0).passed


def test_potential_kernel_constant_bounded_by_growth(circle):
    spec = BoundSampleSpec(t_min=1e-3, t_max=0.25)
    C_G = certify_gaussian_bound(make_kernel("G", circle), 0, 2.0, spec).C
    C_K = certify_gaussian_bound(make_kernel("K", circle), 0, 2.0, spec).C
    assert C_G <= C_K <= C_G * np.exp(0.25) * (1.0 + 1e-12)


def test_sharp_width_fails_for_gradient(circle):
    cert = certify_gaussian_bound(make_kernel("G", circle), 1, 1.0)
    assert not cert.passed
    assert cert.refined_ratio > cert.C


def test_off_diagonal_slack():
    assert off_diagonal_slack(0.5, 2.0) == pytest.approx(np.sqrt(2.0))
    assert off_diagonal_slack(1.0, 2.0) == pytest.approx(8.0 * np.exp(-7.0 / 8.0))
    assert off_diagonal_slack(0.5, 0.25) == pytest.approx(np.sqrt(2.0))


def test_off_diagonal_constant_within_bound(circle):
    cert = certify_gaussian_bound(make_kernel("G", circle), 1, 2.0)
    assert np.isfinite(cert.off_diagonal_C)
    assert cert.off_diagonal_C <= cert.off_diagonal_bound


def test_off_diagonal_decay_enters_the_verdict(circle, monkeypatch):
    monkeypatch.setattr(heat_kernels, "off_diagonal_slack", lambda power, D: 1e-3)
    cert = certify_gaussian_bound(make_kernel("G", circle), 0, 2.0)
    assert cert.margin >= 0
    assert cert.off_diagonal_C > cert.off_diagonal_bound
    assert not cert.passed


def test_time_derivative_certificate(shrinking_circle):
    spec = BoundSampleSpec(t_min=1e-3, t_max=0.04)
    cert = certify_gaussian_bound(make_kernel("G_evolving", shrinking_circle), 0, 2.0, spec, time_order=1)
    assert cert.passed
    assert cert.name == "gaussian_bound[G_evolving,order=0,time_order=1]"


def test_evolving_samples_must_fit_horizon(shrinking_circle):
    with pytest.raises(DomainError):
        certify_gaussian_bound(make_kernel("G_evolving", shrinking_circle), 0, 2.0, BoundSampleSpec(t_max=0.25))
