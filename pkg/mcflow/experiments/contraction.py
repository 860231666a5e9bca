"""
Contraction experiment

Fits C1, C2, C3 at the configured horizon, moves to the recipe horizon (never
past the configured one), refits there, and measures the Lipschitz ratio of the Picard map on the recipe ball and
on a ladder of smaller balls.
"""
import logging

import numpy as np
import pandas as pd

from mcflow.experiments.common import SummaryBuilder, geometry_from, run_cells
from mcflow.fixedpoint import choose_constants, clip_to_recipe, fit_constants, measure_contraction, static_map_spec
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.models import ExperimentConfig, ExperimentSummary

logger = logging.getLogger(__name__)

# Accepted log-log slope of the sup ratio against the ball radius
SLOPE_RANGE = (0.7, 1.3)


def handler(config: ExperimentConfig, store: ArtifactStore) -> ExperimentSummary:
    summary = SummaryBuilder(config, store)
    geom = geometry_from(config)
    section = config.contraction
    J = config.resolution.time_nodes
    probes = config.picard.probes

    constants, _ = fit_constants(geom, config.horizon, J, probes, config.seed)
    delta_recipe, T_recipe = choose_constants(geom, *constants.as_dict().values())
    _, T = clip_to_recipe(geom, delta_recipe, config.horizon, delta_recipe, T_recipe)
    constants, _ = fit_constants(geom, T, J, probes, config.seed)
    summary.fit_all(constants.as_dict())
    C1, C2, _ = constants.as_dict().values()
    delta = 1.0 / (4.0 * C1 * C2)
    summary.fit('delta_recipe', delta)
    summary.fit('T_recipe', T_recipe)
    summary.fit('T_run', T)

    spec = static_map_spec(geom, T, J)
    report = measure_contraction(spec, delta, section.pairs, config.seed)
    summary.fit('contraction_sup_ratio', report.sup_ratio)
    summary.check(
        'contraction_half', report.sup_ratio <= config.tolerances.contraction, report.sup_ratio, config.tolerances.contraction,
        f"ball radius {report.delta:.6g}, horizon {T:.6g}",
    )

    scales = sorted(section.delta_scales, reverse=True)
    ladder = run_cells(
        lambda scale: measure_contraction(spec, scale * delta, section.probe_pairs, config.seed + 1),
        scales,
        config.workers,
    )
    frame = pd.DataFrame({
        'scale': scales,
        'delta': [r.delta for r in ladder],
        'sup_ratio': [r.sup_ratio for r in ladder],
    })
    summary.write_csv('contraction_sweep.csv', frame)
    if len(ladder) > 1:
        slope = float(np.polyfit(np.log(frame['delta']), np.log(frame['sup_ratio']), 1)[0])
        summary.fit('contraction_delta_slope', slope)
        summary.check(
            'contraction_linear_in_delta', SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1], slope, SLOPE_RANGE[1],
            'log-log slope of the sup ratio against the ball radius',
        )
    return summary.finish()
