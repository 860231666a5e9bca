"""
Perturbation experiment

Continuous dependence on the initial graph over the shrinking round base: for
u0 = a * (mode eigenfunction) at every configured amplitude, solve the fixed
point, measure sup_t |u(t)|_C01 / |u0|_C01, the scaled derivative suprema and
the curvature estimates, and compare with the finite-difference oracle.
"""
import logging
from typing import Dict, List

import numpy as np
import pandas as pd

from mcflow.experiments.common import SummaryBuilder, fd_steps_for, geometry_from
from mcflow.fixedpoint import (
    PicardConfig,
    choose_perturbation_constants,
    clip_to_recipe,
    derivative_estimates,
    fit_constants,
    solve_perturbation,
)
from mcflow.geometry import BaseGeometry, GeometryKind, make_evolving
from mcflow.graph_calculus import c01_profile
from mcflow.oracle import ConcentricDifference, compare_fields, curvature_estimates, fd_solve, radial_profile
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.errors import ConfigError
from mcflow.shared.models import ExperimentConfig, ExperimentSummary

logger = logging.getLogger(__name__)


def initial_shape(geom: BaseGeometry, mode: int) -> np.ndarray:
    """Eigenfunction of the given degree scaled to sup 1 (zonal on the sphere)."""
    if mode == 0:
        return np.ones(geom.shape)
    index = (mode, 0) if geom.kind == GeometryKind.SPHERE else mode
    return geom.eigenfunction(index)


def derivative_orders(geom: BaseGeometry) -> List[tuple]:
    top = 1 if geom.kind == GeometryKind.SPHERE else 2
    return [(alpha, k) for k in (0, 1) for alpha in range(top + 1) if alpha + k <= top]


def handler(config: ExperimentConfig, store: ArtifactStore) -> ExperimentSummary:
    """
    Run the continuous-dependence pipeline.

    Raises:
        ConfigError: the base is not a circle or a sphere
    """
    summary = SummaryBuilder(config, store)
    geom = geometry_from(config)
    if not geom.is_curved:
        raise ConfigError(f"perturbation runs over a shrinking circle or sphere, not {geom.kind.value}")
    section = config.perturbation
    T = config.horizon
    J = config.resolution.time_nodes
    evolving = make_evolving(geom, T)

    constants, _ = fit_constants(evolving, T, J, config.picard.probes, config.seed)
    summary.fit_all(constants.as_dict())
    delta_recipe, epsilon_recipe = choose_perturbation_constants(*constants.as_dict().values())
    summary.fit('delta_recipe', delta_recipe)
    summary.fit('epsilon_recipe', epsilon_recipe)
    epsilon = section.epsilon if section.epsilon is not None else epsilon_recipe
    delta, _ = clip_to_recipe(geom, section.delta, T, delta_recipe, scale=float(evolving.radius(T)))
    summary.fit('delta_run', delta)

    def run(amplitude: float, time_nodes: int):
        cfg = PicardConfig(
            horizon=T,
            delta=delta,
            tolerance=config.tolerances.picard,
            max_iterations=config.picard.max_iterations,
            time_nodes=time_nodes,
            epsilon=epsilon,
            seed=config.seed,
        )
        return solve_perturbation(evolving, amplitude * initial_shape(geom, section.mode), cfg)

    rows: List[Dict] = []
    linear_constants = []
    solutions = {}
    for amplitude in section.amplitudes:
        data = float(c01_profile(geom, amplitude * initial_shape(geom, section.mode)))
        if not summary.check(f"data_within_epsilon[a={amplitude:g}]", data <= epsilon, data, epsilon):
            continue
        solution = run(amplitude, J)
        solutions[amplitude] = solution
        u = solution.u
        sup_c01 = float(np.max(c01_profile(geom, u.values, u.base_radius)))
        C = sup_c01 / data
        linear_constants.append(C)
        summary.fit(f"c01_constant[a={amplitude:g}]", C)
        summary.write_csv(f"perturbation_snapshots_a{amplitude:g}.csv", solution.snapshot_frame(store.snapshot_stride))

        estimates = derivative_estimates(solution, derivative_orders(geom))
        for key, value in estimates.by_order().items():
            summary.fit(f"derivative[{key},a={amplitude:g}]", value)

        oracle = fd_solve(geom, u.values[0], T, fd_steps_for(config))
        agreement = compare_fields(radial_profile(u), oracle)
        summary.error(f"oracle[a={amplitude:g}]", agreement.max_abs)
        summary.check(
            f"oracle_agreement[a={amplitude:g}]",
            agreement.max_abs < config.tolerances.max_error,
            agreement.max_abs,
            config.tolerances.max_error,
        )

        if section.mode == 0:
            exact = ConcentricDifference(geom.radius, geom.radius + amplitude, geom.n).field(geom, u.times)
            error = compare_fields(u, exact).max_abs
            summary.error(f"exact[a={amplitude:g}]", error)
            summary.check(f"exact_solution[a={amplitude:g}]", error < config.tolerances.max_error, error, config.tolerances.max_error)

        rows.append({
            'amplitude': amplitude,
            'data_c01': data,
            'sup_c01': sup_c01,
            'c01_constant': C,
            'iterations': solution.iterations,
            'residual': solution.residual,
            'oracle_error': agreement.max_abs,
        })

    summary.write_csv('perturbation_table.csv', pd.DataFrame(rows))
    if not solutions:
        return summary.finish()
    spread = max(linear_constants) / min(linear_constants)
    summary.check('c01_linear_in_data', spread <= 1.2, spread, 1.2, 'ratio of largest to smallest fitted constant')

    # refinement study on the largest amplitude
    largest = max(solutions)
    coarse = solutions[largest]
    fine = run(largest, J * section.refine_factor)
    orders = derivative_orders(geom)
    coarse_estimates = derivative_estimates(coarse, orders).by_order()
    fine_estimates = derivative_estimates(fine, orders).by_order()
    for key, value in coarse_estimates.items():
        change = abs(fine_estimates[key] - value) / max(abs(fine_estimates[key]), 1e-300)
        summary.check(f"derivative_refinement[{key}]", change < config.tolerances.stability, change, config.tolerances.stability)

    coarse_curvature = curvature_estimates(radial_profile(coarse.u))
    fine_curvature = curvature_estimates(radial_profile(fine.u))
    summary.fit('curvature_derivative_constant', coarse_curvature.derivative_constant)
    summary.check(
        'curvature_doubling_bound', coarse_curvature.curvature_passed, coarse_curvature.sup_A, coarse_curvature.curvature_bound
    )
    drift = abs(fine_curvature.derivative_constant - coarse_curvature.derivative_constant) / max(
        fine_curvature.derivative_constant, 1e-300
    )
    summary.check(
        'curvature_derivative_bound',
        coarse_curvature.derivative_passed and drift < config.tolerances.stability,
        drift,
        config.tolerances.stability,
        'relative change of the fitted constant under time refinement',
    )
    return summary.finish()
