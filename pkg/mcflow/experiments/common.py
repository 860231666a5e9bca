"""
Plumbing shared by the experiment handlers: summary assembly, artifact
bookkeeping and the worker pool for independent cells.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from mcflow import __version__
from mcflow.geometry import BaseGeometry, make_base
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.errors import ArtifactError
from mcflow.shared.models import CheckResult, ExperimentConfig, ExperimentSummary

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def geometry_from(config: ExperimentConfig) -> BaseGeometry:
    spec = config.geometry
    return make_base(spec.kind, spec.n, spec.radius_or_period, spec.grid_size)


def fd_steps_for(config: ExperimentConfig) -> int:
    """Oracle steps rounded up to a multiple of the Picard time nodes so the grids share nodes."""
    J = config.resolution.time_nodes
    return int(np.ceil(config.resolution.fd_steps / J)) * J


def run_cells(func: Callable[[T], R], items: Iterable[T], workers: int) -> List[R]:
    """Run independent cells in a thread pool; results keep submission order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


class SummaryBuilder:
    """Collects checks, fitted constants, errors and artifacts of one experiment run"""

    def __init__(self, config: ExperimentConfig, store: ArtifactStore):
        self.config = config
        self.store = store
        self.checks: List[CheckResult] = []
        self.fitted: Dict[str, float] = {}
        self.errors: Dict[str, float] = {}
        self.artifacts: List[str] = []

    # ========== Results ==========

    def check(
        self,
        name: str,
        passed: bool,
        value: Optional[float] = None,
        bound: Optional[float] = None,
        detail: str = '',
    ) -> bool:
        """Record a bound; failures are logged at WARNING."""
        passed = bool(passed)
        self.checks.append(CheckResult(
            name=name,
            passed=passed,
            value=None if value is None else float(value),
            bound=None if bound is None else float(bound),
            detail=detail,
        ))
        if not passed:
            logger.warning(f"Bound {name} failed: value={value} bound={bound} {detail}".rstrip())
        return passed

    def fit(self, name: str, value: float):
        self.fitted[name] = float(value)

    def fit_all(self, values: Dict[str, float], prefix: str = ''):
        for name, value in values.items():
            self.fit(f"{prefix}{name}", value)

    def error(self, name: str, value: float):
        self.errors[name] = float(value)

    # ========== Artifacts ==========

    def _record(self, path) -> bool:
        if path is None:
            return False
        self.artifacts.append(str(path.relative_to(self.store.root)))
        return True

    def write_csv(self, name: str, frame: pd.DataFrame) -> bool:
        return self._record(self.store.write_csv(name, frame))

    def write_json(self, name: str, payload: Any) -> bool:
        return self._record(self.store.write_json(name, payload))

    def write_svg(self, name: str, figure: Figure) -> bool:
        return self._record(self.store.write_svg(name, figure))

    def finish(self) -> ExperimentSummary:
        """
        Assemble the summary and write <experiment>_summary.json.

        Raises:
            ArtifactError: the summary file could not be written
        """
        name = f"{self.config.experiment.replace('-', '_')}_summary.json"
        summary = ExperimentSummary(
            experiment=self.config.experiment,
            passed=all(check.passed for check in self.checks),
            version=__version__,
            config=self.config.model_dump(mode='json'),
            checks=self.checks,
            fitted_constants=self.fitted,
            max_errors=self.errors,
            artifacts=sorted(set(self.artifacts + [name])),
        )
        if not self._record(self.store.write_json(name, summary.model_dump(mode='json', by_alias=True))):
            raise ArtifactError(f"could not write {self.store.root / name}")
        status = 'passed' if summary.passed else f"failed ({', '.join(c.name for c in summary.failed_checks())})"
        logger.info(f"Experiment {summary.experiment} {status}")
        return summary
