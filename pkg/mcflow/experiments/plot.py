"""
Plot experiment

Renders any CSV produced by the other experiments as SVG: snapshot files
(t, grid_index, theta_or_coords, u) become a space-time heatmap, every other
table a line plot of its numeric columns against the first column.
"""
import logging
from pathlib import Path

import pandas as pd
from matplotlib.figure import Figure

from mcflow.experiments.common import SummaryBuilder
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.errors import ConfigError
from mcflow.shared.models import ExperimentConfig, ExperimentSummary

logger = logging.getLogger(__name__)

SNAPSHOT_COLUMNS = {'t', 'grid_index', 'u'}


def _resolve_input(config: ExperimentConfig, store: ArtifactStore) -> Path:
    if not config.plot.input:
        raise ConfigError('plot needs an input CSV (plot.input or --input)')
    path = Path(config.plot.input)
    if not path.exists() and store.exists(config.plot.input):
        path = store.path(config.plot.input)
    return path


def heatmap(frame: pd.DataFrame, title: str, colormap: str) -> Figure:
    grid = frame.pivot(index='t', columns='grid_index', values='u')
    figure = Figure(figsize=(7.0, 4.5))
    ax = figure.subplots()
    image = ax.imshow(
        grid.to_numpy(),
        aspect='auto',
        origin='lower',
        cmap=colormap,
        extent=(grid.columns.min(), grid.columns.max(), grid.index.min(), grid.index.max()),
    )
    figure.colorbar(image, ax=ax, label='u')
    ax.set_xlabel('grid index')
    ax.set_ylabel('t')
    ax.set_title(title)
    return figure


def line_plot(frame: pd.DataFrame, title: str) -> Figure:
    numeric = frame.select_dtypes('number')
    x_name = frame.columns[0]
    figure = Figure(figsize=(7.0, 4.5))
    ax = figure.subplots()
    x = frame[x_name] if x_name in numeric.columns else range(len(frame))
    for column in numeric.columns:
        if column != x_name:
            ax.plot(x, numeric[column], marker='o', label=column)
    ax.set_xlabel(x_name)
    ax.set_title(title)
    ax.legend()
    return figure


def handler(config: ExperimentConfig, store: ArtifactStore) -> ExperimentSummary:
    """
    Render the input CSV.

    Raises:
        ConfigError: no input configured
    """
    summary = SummaryBuilder(config, store)
    path = _resolve_input(config, store)
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error(f"Error reading {path}: {e}")
        summary.check('plot_input_readable', False, detail=str(path))
        return summary.finish()

    title = config.plot.title or path.stem
    if SNAPSHOT_COLUMNS <= set(frame.columns):
        figure = heatmap(frame, title, config.plot.colormap)
    else:
        figure = line_plot(frame, title)
    written = summary.write_svg(f"{path.stem}.svg", figure)
    summary.check('svg_written', written, detail=f"{path.stem}.svg")
    return summary.finish()
