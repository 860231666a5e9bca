import numpy as np
import pytest

from mcflow.fixedpoint import (
    FittedConstants,
    FlowSolution,
    PicardConfig,
    ball_radius,
    check_uniqueness,
    choose_constants,
    choose_perturbation_constants,
    clip_to_recipe,
    derivative_estimates,
    fit_constants,
    measure_contraction,
    solve_existence,
    solve_perturbation,
    static_map_spec,
)
from mcflow.geometry import make_base, make_evolving
from mcflow.graph_calculus import SpaceTimeField
from mcflow.oracle import ConcentricDifference, ShrinkingCircle, ShrinkingSphere, compare_fields
from mcflow.shared.errors import (
    ConvergenceError,
    DomainError,
    PreconditionError,
    ResolutionError,
    UnsupportedOrderError,
)


@pytest.fixture
def circle64():
    return make_base("circle", 1, 1.0, 64)


def picard(**overrides):
    params = dict(horizon=0.04, delta=0.25, tolerance=1e-10, max_iterations=40, time_nodes=64, seed=3)
    params.update(overrides)
    return PicardConfig(**params)


# ========== Constant recipes ==========

def test_choose_constants_unit_circle(circle):
    delta, T = choose_constants(circle, 1.0, 1.0, 1.0)
    assert delta == pytest.approx(0.25)
    assert T == pytest.approx(0.015625)


def test_choose_constants_flat_uses_injectivity_radius(line):
    delta, T = choose_constants(line, 1.0, 2.0, 1.0)
    assert delta == pytest.approx(0.125)
    assert T == pytest.approx((np.pi / 2) ** 2)


def test_choose_constants_doubling_lipschitz_halves_delta(circle):
    delta1, _ = choose_constants(circle, 0.5, 1.0, 1.0)
    delta2, _ = choose_constants(circle, 0.5, 2.0, 1.0)
    assert delta2 == pytest.approx(delta1 / 2)


@pytest.mark.parametrize("C1, C2", [(0.0, 1.0), (1.0, -1.0)])
def test_choose_constants_rejects_nonpositive(circle, C1, C2):
    with pytest.raises(DomainError):
        choose_constants(circle, C1, C2, 1.0)


def test_choose_perturbation_constants():
    delta, epsilon = choose_perturbation_constants(1.0, 1.0, 2.0)
    assert delta == pytest.approx(0.25)
    assert epsilon == pytest.approx(0.125)
    with pytest.raises(DomainError):
        choose_perturbation_constants(1.0, 0.0, 1.0)


def test_ball_radius_capped_below_validity_threshold(circle):
    assert ball_radius(circle, 1.0) == pytest.approx(0.27)
    assert ball_radius(circle, 0.1) == pytest.approx(0.1)
    assert ball_radius(circle, 1.0, scale=0.5) == pytest.approx(0.135)


def test_clip_to_recipe(circle):
    assert clip_to_recipe(circle, 0.25, 0.05, 2.0, 2.5) == (pytest.approx(0.25), pytest.approx(0.05))
    delta, T = clip_to_recipe(circle, 0.25, 0.05, 0.1, 0.01)
    assert delta == pytest.approx(0.1)
    assert T == pytest.approx(0.01)
    assert clip_to_recipe(circle, 1.0, 0.05, 2.0)[0] == pytest.approx(0.27)


def test_fitted_constants_names():
    static = FittedConstants(evolving=False, operator=0.2, lipschitz=3.0, data=1.0, samples=4, seed=0)
    moving = static.model_copy(update={"evolving": True})
    assert static.as_dict() == {"C1": 0.2, "C2": 3.0, "C3": 1.0}
    assert list(moving.as_dict()) == ["C4", "C5", "C6"]


# ========== Solutions ==========

def test_flow_solution_ratios(line):
    u = SpaceTimeField.zeros(line, np.linspace(0.0, 0.04, 9))
    solution = FlowSolution(u, distances=[1e-2, 1e-3, 1e-5])
    assert solution.iterations == 3
    assert solution.ratios == pytest.approx([0.1, 0.01])
    diagnostics = solution.diagnostics()
    assert diagnostics["time_nodes"] == 8
    assert diagnostics["horizon"] == pytest.approx(0.04)


def test_existence_on_flat_base_is_zero(line):
    solution = solve_existence(line, picard())
    assert solution.converged
    assert solution.iterations == 1
    assert np.all(solution.u.values == 0.0)
    assert solution.residual == 0.0


def test_existence_matches_shrinking_circle(circle64):
    config = picard()
    solution = solve_existence(circle64, config)
    assert solution.converged
    assert solution.residual < 2 * config.tolerance
    exact = ShrinkingCircle(1.0).field(circle64, solution.u.times)
    assert compare_fields(solution.u, exact).max_abs < 1e-5
    assert solution.u.values[-1, 0] == pytest.approx(np.sqrt(1 - 0.08) - 1, abs=1e-5)


@pytest.mark.slow
def test_existence_matches_shrinking_sphere():
    sphere = make_base("sphere", 2, 1.0, 32)
    solution = solve_existence(sphere, picard(horizon=0.02, time_nodes=32))
    assert solution.converged
    exact = ShrinkingSphere(1.0).field(sphere, solution.u.times)
    assert compare_fields(solution.u, exact).max_abs < 1e-4
    assert solution.u.values[-1].mean() == pytest.approx(np.sqrt(1 - 0.08) - 1, abs=1e-4)


@pytest.mark.slow
def test_existence_uniqueness_from_random_start(circle64):
    config = picard()
    reference = solve_existence(circle64, config)
    report = check_uniqueness(circle64, config, reference)
    assert report.passed
    assert 0 < report.start_norm <= 0.5 * ball_radius(circle64, config.delta) * (1 + 1e-9)


def test_perturbation_rejects_large_data(shrinking_circle):
    u0 = 0.1 * np.cos(2 * shrinking_circle.base.grid_points())
    with pytest.raises(PreconditionError):
        solve_perturbation(shrinking_circle, u0, picard(epsilon=0.01))


def test_perturbation_of_flat_zero_data(line):
    solution = solve_perturbation(line, np.zeros(line.shape), picard())
    assert solution.converged
    assert np.max(np.abs(solution.u.values)) == 0.0


@pytest.mark.slow
def test_perturbation_matches_concentric_circles(circle64):
    evolving = make_evolving(circle64, 0.05)
    config = picard(epsilon=0.1)
    solution = solve_perturbation(evolving, np.full(circle64.shape, 0.05), config)
    assert solution.converged
    assert np.max(np.abs(solution.u.values[0] - 0.05)) < 1e-12
    exact = ConcentricDifference(1.0, 1.05, 1).field(circle64, solution.u.times)
    assert compare_fields(solution.u, exact).max_abs < 1e-4

    report = derivative_estimates(solution, [(0, 0), (1, 0), (0, 1)])
    assert report.data_norm == pytest.approx(0.05)
    assert all(np.isfinite(C) for C in report.by_order().values())


# ========== Contraction ==========

def test_measure_contraction_is_seeded(circle64):
    spec = static_map_spec(circle64, 0.04, 64)
    first = measure_contraction(spec, 0.25, pairs=3, seed=11)
    second = measure_contraction(spec, 0.25, pairs=3, seed=11)
    assert first.ratios == second.ratios
    assert len(first.ratios) == 3
    assert first.delta == pytest.approx(0.25)
    assert np.isfinite(first.sup_ratio) and first.sup_ratio > 0


def test_measure_contraction_needs_pairs(circle64):
    with pytest.raises(DomainError):
        measure_contraction(static_map_spec(circle64, 0.04, 64), 0.25, pairs=0, seed=0)


@pytest.mark.slow
def test_fit_constants_static_circle(circle64):
    bundle, fits = fit_constants(circle64, 0.04, 64, probes=2, seed=5)
    assert [fit.operator for fit in fits] == ["C1", "C2", "C3"]
    assert all(value > 0 for value in bundle.as_dict().values())
    assert bundle.data == pytest.approx(np.expm1(0.04) / 0.2, rel=1e-6)


# ========== Derivative estimates ==========

def test_derivative_estimates_argument_checks(line):
    coarse = FlowSolution(SpaceTimeField.zeros(line, np.linspace(0.0, 0.04, 4)))
    with pytest.raises(ResolutionError):
        derivative_estimates(coarse, [(0, 1)])
    with pytest.raises(DomainError):
        derivative_estimates(coarse, [(3, 0)])


def test_derivative_estimates_need_convergence(line):
    unconverged = FlowSolution(SpaceTimeField.zeros(line, np.linspace(0.0, 0.04, 9)), distances=[1e-2, 1e-3])
    with pytest.raises(ConvergenceError):
        derivative_estimates(unconverged, [(0, 0)])


def test_derivative_estimates_stop_at_first_order_on_sphere(sphere):
    solution = FlowSolution(SpaceTimeField.zeros(sphere, np.linspace(0.0, 0.02, 9)), converged=True)
    with pytest.raises(UnsupportedOrderError):
        derivative_estimates(solution, [(2, 0)])
    assert derivative_estimates(solution, [(1, 1)]).by_order() == {"alpha=1,k=1": 0.0}


def test_derivative_estimates_of_zero_data(line):
    solution = solve_existence(line, picard())
    report = derivative_estimates(solution, [(0, 0), (2, 1)])
    assert report.data_norm == 0.0
    assert report.by_order() == {"alpha=0,k=0": 0.0, "alpha=2,k=1": 0.0}
