"""
Norms experiment

Self-tests of the parabolic norms and of the nonlinearity: closed-form values on
constants, homogeneity, the triangle inequality, c01 <= X_T, time-grid
refinement, ball-volume bounds, metric equivalence over a shrinking base and the
quadratic behaviour of Q.
"""
import logging

import numpy as np
import pandas as pd

from mcflow.duhamel import random_source
from mcflow.experiments.common import SummaryBuilder, geometry_from
from mcflow.geometry import GeometryKind, check_ball_volume_bounds, make_evolving
from mcflow.graph_calculus import GraphFunction, SpaceTimeField, c01_profile, check_quadratic_bounds, quadratic_scaling_profile
from mcflow.parabolic_norms import metric_equivalence_check, xt_norm, yt_norm
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.models import ExperimentConfig, ExperimentSummary

logger = logging.getLogger(__name__)

# Pointwise constant asserted for the quadratic and difference bounds on Q
QUADRATIC_C = 10.0
QUADRATIC_SHAPES = 10
EXACT = 1e-10


def handler(config: ExperimentConfig, store: ArtifactStore) -> ExperimentSummary:
    summary = SummaryBuilder(config, store)
    geom = geometry_from(config)
    section = config.norms
    T = config.horizon
    times = np.linspace(0.0, T, config.resolution.time_nodes + 1)
    rng = np.random.default_rng(config.seed)
    c = section.constant

    constant = SpaceTimeField(geom, times, np.full((times.size,) + geom.shape, c))
    x_const, y_const = xt_norm(constant).value, yt_norm(constant).value
    summary.check('xt_constant', abs(x_const - abs(c)) <= EXACT * abs(c), x_const, abs(c))
    summary.fit('yt_constant', y_const)
    if geom.n == 1:
        # interval balls and the time window are integrated exactly for constants
        expected_y = abs(c) * np.sqrt(T)
        summary.check('yt_constant', abs(y_const - expected_y) <= 1e-6 * expected_y, y_const, expected_y)

    rows = []
    for i in range(section.random_pairs):
        u = random_source(geom, times, rng, bandlimit=4).scaled(section.epsilon)
        v = random_source(geom, times, rng, bandlimit=4).scaled(section.epsilon)
        xu, xv, xs = xt_norm(u).value, xt_norm(v).value, xt_norm(u + v).value
        scaled = xt_norm(u.scaled(-3.0)).value
        c01 = float(np.max(c01_profile(geom, u.values)))
        rows.append({'pair': i, 'xt_u': xu, 'xt_v': xv, 'xt_sum': xs, 'xt_scaled': scaled, 'c01_u': c01})
        summary.check(f"triangle[{i}]", xs <= (xu + xv) * (1.0 + EXACT), xs, xu + xv)
        summary.check(f"homogeneity[{i}]", abs(scaled - 3.0 * xu) <= 1e-9 * xu, scaled, 3.0 * xu)
        summary.check(f"c01_below_xt[{i}]", c01 <= xu * (1.0 + EXACT), c01, xu)
    summary.write_csv('norms_pairs.csv', pd.DataFrame(rows))

    smooth = SpaceTimeField.from_function(
        geom, times, lambda points, t: section.epsilon * (1.0 + t / T) * geom.eigenfunction(_first_mode(geom))
    )
    refined = xt_norm(smooth, check_refinement=True)
    if refined.refinement_stable is not None:
        summary.check('xt_refinement', refined.refinement_stable, refined.value)

    passed, lo, hi = check_ball_volume_bounds(geom)
    summary.fit('ball_volume_lower', lo)
    summary.fit('ball_volume_upper', hi)
    summary.check('ball_volume_bounds', passed, lo, hi)

    if geom.is_curved:
        evolving = make_evolving(geom, T)
        moving = SpaceTimeField(geom, times, smooth.values, evolving)
        equivalence = metric_equivalence_check(moving)
        hi_value = max(equivalence['evolving'], equivalence['fixed'])
        lo_value = min(equivalence['evolving'], equivalence['fixed'])
        summary.check('metric_equivalence', equivalence['passed'], hi_value / lo_value, equivalence['bound'])

    ratios, fitted_q, fitted_d = [], 0.0, 0.0
    shape_rng = np.random.default_rng(config.seed + 1)
    for _ in range(QUADRATIC_SHAPES):
        shape = geom.random_field(shape_rng, 2)
        small, smaller = quadratic_scaling_profile(GraphFunction(geom, shape), [1e-2, 1e-3])
        ratios.append(abs(small - smaller) / smaller)
        u = GraphFunction(geom, 0.04 * geom.length_scale * shape)
        v = GraphFunction(geom, 0.04 * geom.length_scale * geom.random_field(shape_rng, 4))
        report = check_quadratic_bounds(u, v, QUADRATIC_C)
        fitted_q = max(fitted_q, report.fitted_C_quadratic)
        fitted_d = max(fitted_d, report.fitted_C_difference)
    summary.check(
        'quadratic_scaling', max(ratios) <= config.tolerances.quadratic_ratio, max(ratios), config.tolerances.quadratic_ratio
    )
    summary.fit('quadratic_bound_C', fitted_q)
    summary.fit('difference_bound_C', fitted_d)
    summary.check('quadratic_bound', fitted_q <= QUADRATIC_C, fitted_q, QUADRATIC_C)
    summary.check('difference_bound', fitted_d <= QUADRATIC_C, fitted_d, QUADRATIC_C)
    return summary.finish()


def _first_mode(geom):
    if geom.kind == GeometryKind.SPHERE:
        return (2, 0)
    if geom.kind == GeometryKind.PERIODIC_PLANE:
        return (1, 1)
    return 2
