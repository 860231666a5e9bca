"""
Existence experiment

Fits the operator constants, derives the recipe ball radius and horizon, solves
the fixed point from u = 0 with the configured ball and horizon clipped to the
recipe, and compares it with the exact round (or flat) solution and with the
finite-difference oracle.
"""
import logging

import numpy as np

from mcflow.experiments.common import SummaryBuilder, fd_steps_for, geometry_from
from mcflow.fixedpoint import PicardConfig, check_uniqueness, choose_constants, clip_to_recipe, fit_constants, solve_existence
from mcflow.geometry import GeometryKind
from mcflow.graph_calculus import SpaceTimeField
from mcflow.oracle import ShrinkingCircle, ShrinkingSphere, compare_fields, fd_solve
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.models import ExperimentConfig, ExperimentSummary

logger = logging.getLogger(__name__)

# Slack on the halving ratio of successive Picard distances
RATIO_SLACK = 0.05


def exact_field(geom, times) -> SpaceTimeField:
    """Exact solution starting from the base itself."""
    if geom.kind == GeometryKind.CIRCLE:
        return ShrinkingCircle(geom.radius).field(geom, times)
    if geom.kind == GeometryKind.SPHERE:
        return ShrinkingSphere(geom.radius).field(geom, times)
    return SpaceTimeField.zeros(geom, times)


def handler(config: ExperimentConfig, store: ArtifactStore) -> ExperimentSummary:
    """
    Run the existence pipeline.

    Args:
        config: validated experiment config
        store: artifact store for CSV/JSON outputs

    Returns:
        ExperimentSummary
    """
    summary = SummaryBuilder(config, store)
    geom = geometry_from(config)
    picard = config.picard
    T = config.horizon
    J = config.resolution.time_nodes

    constants, fits = fit_constants(geom, T, J, picard.probes, config.seed)
    summary.fit_all(constants.as_dict())
    delta_recipe, T_recipe = choose_constants(geom, *constants.as_dict().values())
    summary.fit('delta_recipe', delta_recipe)
    summary.fit('T_recipe', T_recipe)
    summary.write_json('existence_constants.json', [fit.model_dump(mode='json') for fit in fits])

    delta, T = clip_to_recipe(geom, picard.delta, T, delta_recipe, T_recipe)
    summary.fit('delta_run', delta)
    summary.fit('T_run', T)
    summary.check('run_within_recipe', delta <= delta_recipe and T <= T_recipe, T, T_recipe, f"delta={delta:g} of {delta_recipe:g}")
    run = PicardConfig(
        horizon=T,
        delta=delta,
        tolerance=config.tolerances.picard,
        max_iterations=picard.max_iterations,
        time_nodes=J,
        seed=config.seed,
    )
    solution = solve_existence(geom, run)
    summary.write_json('existence_diagnostics.json', solution.diagnostics())
    summary.write_csv('existence_snapshots.csv', solution.snapshot_frame(store.snapshot_stride))

    summary.check('fixed_point_residual', solution.residual < 2.0 * run.tolerance, solution.residual, 2.0 * run.tolerance)
    summary.check('solution_in_ball', solution.norm <= run.delta, solution.norm, run.delta)
    late_ratios = solution.ratios[1:]
    if late_ratios:
        worst = max(late_ratios)
        summary.check('contraction_half_iterates', worst <= 0.5 + RATIO_SLACK, worst, 0.5 + RATIO_SLACK)

    exact = compare_fields(solution.u, exact_field(geom, solution.u.times))
    summary.error('exact', exact.max_abs)
    summary.check('exact_solution', exact.max_abs < config.tolerances.max_error, exact.max_abs, config.tolerances.max_error)

    if picard.compare_oracle:
        oracle = fd_solve(geom, np.zeros(geom.shape), T, fd_steps_for(config))
        agreement = compare_fields(solution.u, oracle)
        summary.error('oracle', agreement.max_abs)
        summary.check(
            'oracle_agreement', agreement.max_abs < config.tolerances.max_error, agreement.max_abs, config.tolerances.max_error
        )

    for restart in range(picard.uniqueness_restarts):
        report = check_uniqueness(geom, run.model_copy(update={'seed': config.seed + 101 + restart}), solution)
        summary.check(
            f"uniqueness_in_ball[{restart}]", report.passed, report.distance, 2.0 * report.tolerance
        )

    return summary.finish()
