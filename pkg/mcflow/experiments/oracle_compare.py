"""
Oracle comparison experiment

Runs the fixed-point solvers and the finite-difference oracle on every catalog
case of the configured base plus seeded random admissible initial graphs, and
tabulates the uniform differences.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from mcflow.experiments.common import SummaryBuilder, fd_steps_for, geometry_from, run_cells
from mcflow.fixedpoint import PicardConfig, ball_radius, solve_existence, solve_perturbation
from mcflow.geometry import BaseGeometry, GeometryKind, make_evolving
from mcflow.oracle import (
    ConcentricDifference,
    ExactSolution,
    ShrinkingCircle,
    ShrinkingSphere,
    StaticFlat,
    compare_fields,
    fd_solve,
    radial_profile,
)
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.models import ExperimentConfig, ExperimentSummary

logger = logging.getLogger(__name__)


@dataclass
class Case:
    """One comparison: initial heights, and the exact solution when one is known"""

    name: str
    u0: np.ndarray
    exact: Optional[ExactSolution] = None


def catalog_cases(geom: BaseGeometry, shift: float) -> List[Case]:
    zeros = np.zeros(geom.shape)
    if geom.kind == GeometryKind.CIRCLE:
        return [
            Case('ShrinkingCircle', zeros, ShrinkingCircle(geom.radius)),
            Case('ConcentricDifference', np.full(geom.shape, shift), ConcentricDifference(geom.radius, geom.radius + shift, 1)),
        ]
    if geom.kind == GeometryKind.SPHERE:
        return [
            Case('ShrinkingSphere', zeros, ShrinkingSphere(geom.radius)),
            Case('ConcentricDifference', np.full(geom.shape, shift), ConcentricDifference(geom.radius, geom.radius + shift, 2)),
        ]
    return [Case('StaticFlat', zeros, StaticFlat())]


def handler(config: ExperimentConfig, store: ArtifactStore) -> ExperimentSummary:
    summary = SummaryBuilder(config, store)
    geom = geometry_from(config)
    section = config.oracle
    T = config.horizon
    J = config.resolution.time_nodes
    steps = fd_steps_for(config)
    evolving = make_evolving(geom, T) if geom.is_curved else None
    min_radius = float(evolving.radius(T)) if evolving is not None else None

    rng = np.random.default_rng(config.seed)
    cases = catalog_cases(geom, section.shift)
    for i in range(section.random_cases):
        cases.append(Case(f"random[{i}]", geom.random_field(rng, 4, section.amplitude * geom.length_scale)))

    picard = PicardConfig(
        horizon=T,
        delta=ball_radius(geom, config.picard.delta, min_radius),
        tolerance=config.tolerances.picard,
        max_iterations=config.picard.max_iterations,
        time_nodes=J,
        seed=config.seed,
    )

    def compare(case: Case) -> Dict:
        if not np.any(case.u0):
            solution = solve_existence(geom, picard)
            static = solution.u
        else:
            solution = solve_perturbation(evolving or geom, case.u0, picard)
            static = radial_profile(solution.u)
        oracle = fd_solve(geom, case.u0, T, steps)
        row = {
            'case': case.name,
            'iterations': solution.iterations,
            'oracle_difference': compare_fields(static, oracle).max_abs,
            'exact_difference': float('nan'),
        }
        if case.exact is not None:
            row['exact_difference'] = compare_fields(solution.u, case.exact.field(geom, solution.u.times)).max_abs
        return row

    rows = run_cells(compare, cases, config.workers)
    tolerance = config.tolerances.max_error
    for row in rows:
        summary.error(f"oracle[{row['case']}]", row['oracle_difference'])
        summary.check(f"oracle_agreement[{row['case']}]", row['oracle_difference'] < tolerance, row['oracle_difference'], tolerance)
        if not np.isnan(row['exact_difference']):
            summary.error(f"exact[{row['case']}]", row['exact_difference'])
            summary.check(f"exact_solution[{row['case']}]", row['exact_difference'] < tolerance, row['exact_difference'], tolerance)
    summary.write_csv('oracle_compare.csv', pd.DataFrame(rows))
    return summary.finish()
