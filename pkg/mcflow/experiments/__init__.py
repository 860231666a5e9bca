"""
Experiment handlers, one per command-line subcommand.

Every handler takes a validated ExperimentConfig and an ArtifactStore and
returns the ExperimentSummary it wrote.
"""
from typing import Callable, Dict

from mcflow.experiments import contraction, existence, kernel_bounds, norms, oracle_compare, perturbation, plot
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.models import ExperimentConfig, ExperimentSummary

Handler = Callable[[ExperimentConfig, ArtifactStore], ExperimentSummary]

HANDLERS: Dict[str, Handler] = {
    'existence': existence.handler,
    'perturbation': perturbation.handler,
    'kernel-bounds': kernel_bounds.handler,
    'contraction': contraction.handler,
    'norms': norms.handler,
    'oracle-compare': oracle_compare.handler,
    'plot': plot.handler,
}
