"""
Contraction-mapping solvers for graphical MCF.

Existence over a static base seeks a fixed point of

    G(u) = duhamel(K, -H0 + Q(u))

in a ball of X_T, and continuous dependence over the shrinking round base seeks
a fixed point of

    G(u) = propagate(K_evolving, u0) + duhamel(K_evolving, Q_t(u)).

The radius of the ball, the horizon and the data smallness follow from fitted
operator constants: delta = 1/(4 C1 C2), sqrt(T) = min(1/(8 C1 C2 C3 |H0|), i0/2)
and epsilon = 1/(4 C4 C5 C6).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from mcflow.duhamel import (
    constant_source_probe,
    duhamel_convolve,
    initial_data_probe,
    operator_norm_probe,
    propagate_field,
    random_source,
)
from mcflow.geometry import BaseGeometry, EvolvingGeometry, GeometryKind
from mcflow.graph_calculus import GraphFunction, SpaceTimeField, graph_validity_threshold, nonlinearity_field
from mcflow.heat_kernels import KernelEvaluator, KernelTag, make_kernel
from mcflow.parabolic_norms import c01_norm, xt_norm, yt_norm
from mcflow.shared.errors import (
    BallExitError,
    ConvergenceError,
    DomainError,
    PreconditionError,
    ResolutionError,
    UnsupportedOrderError,
)
from mcflow.shared.models import FittedConstant

logger = logging.getLogger(__name__)

# Largest ball radius as a fraction of the graph validity threshold
BALL_CAP = 0.9


# ========== Configuration ==========

class PicardConfig(BaseModel):
    """Parameters of one Picard run"""
    horizon: float = Field(..., gt=0, description="T for existence, T' for perturbation")
    delta: float = Field(..., gt=0, description="Radius of the X_T ball")
    tolerance: float = Field(1.0e-9, gt=0, description="Stop when successive iterates are this close in X_T")
    max_iterations: int = Field(60, ge=1)
    time_nodes: int = Field(64, ge=4)
    epsilon: Optional[float] = Field(None, gt=0, description="Smallness bound on c01_norm(u0)")
    seed: int = 0

    def times(self) -> NDArray:
        return np.linspace(0.0, self.horizon, self.time_nodes + 1)


class FittedConstants(BaseModel):
    """Fitted operator constants: C1, C2, C3 on a static base or C4, C5, C6 on a shrinking one"""
    evolving: bool
    operator: float = Field(..., description="C1 or C4: duhamel operator norm from Y_T to X_T")
    lipschitz: float = Field(..., description="C2 or C5: Lipschitz constant of the nonlinearity")
    data: float = Field(..., description="C3 (constant source) or C6 (initial data)")
    samples: int
    seed: int

    def as_dict(self) -> Dict[str, float]:
        names = ("C4", "C5", "C6") if self.evolving else ("C1", "C2", "C3")
        return dict(zip(names, (self.operator, self.lipschitz, self.data)))


# ========== Solutions ==========

@dataclass
class FlowSolution:
    """Result of a Picard run.

    Attributes:
        u: the last iterate
        distances: X_T distance between successive iterates
        residual: X_T distance between G(u) and u
        converged: whether the distance fell under the tolerance
    """

    u: SpaceTimeField
    distances: List[float] = field(default_factory=list)
    residual: float = float("nan")
    converged: bool = False
    delta: float = float("nan")
    tolerance: float = float("nan")
    norm: float = float("nan")

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> List[float]:
        d = self.distances
        return [d[i] / d[i - 1] for i in range(1, len(d)) if d[i - 1] > 0]

    def diagnostics(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "distances": self.distances,
            "contraction_ratios": self.ratios,
            "residual": self.residual,
            "norm": self.norm,
            "delta": self.delta,
            "tolerance": self.tolerance,
            "horizon": self.u.horizon,
            "time_nodes": int(self.u.times.size - 1),
        }

    def snapshot_frame(self, stride: int = 1) -> pd.DataFrame:
        return self.u.to_frame(stride)


def _picard(
    mapping: Callable[[SpaceTimeField], SpaceTimeField],
    start: SpaceTimeField,
    delta: float,
    tolerance: float,
    max_iterations: int,
    label: str,
) -> FlowSolution:
    """Iterate `mapping` from `start` until successive iterates agree in X_T."""
    u = start
    distances: List[float] = []
    for m in range(max_iterations):
        new = mapping(u)
        dist = xt_norm(new - u).value
        distances.append(dist)
        norm = xt_norm(new).value
        ratio = dist / distances[-2] if len(distances) > 1 and distances[-2] > 0 else float("nan")
        logger.debug(f"{label} iterate {m + 1}: distance {dist:.3e}, ratio {ratio:.3g}, norm {norm:.4g}")
        if norm > delta:
            ratios = [distances[i] / distances[i - 1] for i in range(1, len(distances)) if distances[i - 1] > 0]
            raise BallExitError(
                f"{label}: iterate {m + 1} has X_T norm {norm:.4g} > delta={delta:.4g}; "
                f"the map is not a contraction of this ball",
                ratios,
            )
        u = new
        if dist < tolerance:
            residual = xt_norm(mapping(u) - u).value
            logger.info(f"{label} converged in {m + 1} iterations (residual {residual:.3e})")
            return FlowSolution(u, distances, residual, True, delta, tolerance, norm)

    ratios = [distances[i] / distances[i - 1] for i in range(1, len(distances)) if distances[i - 1] > 0]
    raise ConvergenceError(
        f"{label} did not reach tolerance {tolerance:g} in {max_iterations} iterations "
        f"(last distance {distances[-1]:.3e})",
        ratios,
    )


def ball_radius(geom: BaseGeometry, delta: float, scale: Optional[float] = None) -> float:
    """delta capped below the graph validity threshold at length scale `scale`."""
    return min(delta, BALL_CAP * graph_validity_threshold(geom, scale))


# ========== Constant recipes ==========

def choose_constants(geom: BaseGeometry, C1: float, C2: float, C3: float) -> Tuple[float, float]:
    """
    Ball radius and horizon for the existence map.

    Args:
        geom: base geometry (supplies H0 and the injectivity radius)
        C1: duhamel operator norm
        C2: Lipschitz constant of Q
        C3: constant-source constant

    Returns:
        (delta, T) with delta = 1/(4 C1 C2) and sqrt(T) = min(1/(8 C1 C2 C3 |H0|), i0/2)
    """
    if C1 <= 0 or C2 <= 0:
        raise DomainError(f"fitted constants must be positive, got C1={C1}, C2={C2}")
    delta = 1.0 / (4.0 * C1 * C2)
    root = geom.injectivity_radius / 2.0
    H0 = abs(geom.H0)
    if H0 > 0 and C3 > 0:
        root = min(1.0 / (8.0 * C1 * C2 * C3 * H0), root)
    return delta, root ** 2


def choose_perturbation_constants(C4: float, C5: float, C6: float) -> Tuple[float, float]:
    """(delta, epsilon) = (1/(4 C4 C5), 1/(4 C4 C5 C6))."""
    if min(C4, C5, C6) <= 0:
        raise DomainError(f"fitted constants must be positive, got C4={C4}, C5={C5}, C6={C6}")
    delta = 1.0 / (4.0 * C4 * C5)
    return delta, delta / C6


def clip_to_recipe(
    geom: BaseGeometry,
    delta: float,
    horizon: float,
    delta_recipe: float,
    T_recipe: Optional[float] = None,
    scale: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Run parameters no larger than the recipe allows.

    The ball radius is also capped below the graph validity threshold; the
    horizon only shrinks, so it stays before extinction.
    """
    run_delta = ball_radius(geom, min(delta, delta_recipe), scale)
    run_horizon = horizon if T_recipe is None else min(horizon, T_recipe)
    if run_delta < delta or run_horizon < horizon:
        logger.warning(
            f"Configured delta={delta:g}, T={horizon:g} clipped to delta={run_delta:g}, "
            f"T={run_horizon:g} by the recipe and the validity cap"
        )
    return run_delta, run_horizon


# ========== Solvers ==========

def _static_map(kernel: KernelEvaluator) -> Callable[[SpaceTimeField], SpaceTimeField]:
    H0 = kernel.geom.H0

    def mapping(u: SpaceTimeField) -> SpaceTimeField:
        Q = nonlinearity_field(u)
        return duhamel_convolve(kernel, Q.with_values(Q.values - H0))

    return mapping


def _data_map(kernel: KernelEvaluator, linear: SpaceTimeField) -> Callable[[SpaceTimeField], SpaceTimeField]:
    def mapping(u: SpaceTimeField) -> SpaceTimeField:
        return linear + duhamel_convolve(kernel, nonlinearity_field(u))

    return mapping


def solve_existence(geom: BaseGeometry, config: PicardConfig, start: Optional[SpaceTimeField] = None) -> FlowSolution:
    """
    Picard iteration for the flow starting from the base itself.

    Args:
        geom: static base
        config: horizon, ball radius, tolerance
        start: initial iterate, u = 0 when omitted

    Returns:
        FlowSolution with u(., 0) = 0

    Raises:
        BallExitError: an iterate left the delta-ball
        ConvergenceError: tolerance not reached within max_iterations
    """
    kernel = make_kernel(KernelTag.K, geom)
    times = config.times()
    start = SpaceTimeField.zeros(geom, times) if start is None else start
    logger.info(
        f"Existence run on {geom.kind.value}: T={config.horizon:g}, delta={config.delta:g}, "
        f"J={config.time_nodes}, N={geom.grid_size}"
    )
    return _picard(_static_map(kernel), start, config.delta, config.tolerance, config.max_iterations, "existence")


def solve_perturbation(
    geometry: Union[BaseGeometry, EvolvingGeometry],
    u0: ArrayLike,
    config: PicardConfig,
    start: Optional[SpaceTimeField] = None,
) -> FlowSolution:
    """
    Picard iteration for a graph with initial heights u0.

    Over a shrinking round base the map uses K_evolving and Q_t. Over a static
    base it is u -> propagate(K, u0) + duhamel(K, -H0 + Q(u)).

    Args:
        geometry: shrinking circle or sphere valid on [0, T'], or a static base
        u0: initial heights on the base grid
        config: horizon T', ball radius, tolerance and (optionally) epsilon
        start: initial iterate, the propagated data when omitted

    Returns:
        FlowSolution with u(., 0) = u0

    Raises:
        PreconditionError: c01_norm(u0) > epsilon
    """
    evolving = geometry if isinstance(geometry, EvolvingGeometry) else None
    geom = geometry.base if evolving is not None else geometry
    u0 = np.asarray(u0, dtype=float)
    size = c01_norm(GraphFunction(geom, u0))
    if config.epsilon is not None and size > config.epsilon:
        raise PreconditionError(f"c01_norm(u0) = {size:.4g} exceeds epsilon = {config.epsilon:.4g}")

    times = config.times()
    if evolving is not None:
        kernel = make_kernel(KernelTag.K_EVOLVING, evolving)
        linear = propagate_field(kernel, u0, times)
    else:
        kernel = make_kernel(KernelTag.K, geom)
        constant = SpaceTimeField(geom, times, np.full((times.size,) + geom.shape, -geom.H0))
        linear = propagate_field(kernel, u0, times) + duhamel_convolve(kernel, constant)
    start = linear if start is None else start
    logger.info(
        f"Perturbation run on {'shrinking ' if evolving else ''}{geom.kind.value}: "
        f"T'={config.horizon:g}, |u0|_C01={size:.4g}, delta={config.delta:g}"
    )
    return _picard(
        _data_map(kernel, linear), start, config.delta, config.tolerance, config.max_iterations, "perturbation"
    )


# ========== Uniqueness and contraction ==========

def _ball_sample(geom: BaseGeometry, times: NDArray, rng: np.random.Generator, radius: float, evolving=None) -> SpaceTimeField:
    field_ = random_source(geom, times, rng, bandlimit=4, evolving=evolving)
    return field_.scaled(radius / xt_norm(field_).value)


class UniquenessReport(BaseModel):
    """Two Picard runs from different starting iterates"""
    distance: float
    tolerance: float
    passed: bool
    start_norm: float


def check_uniqueness(
    geometry: Union[BaseGeometry, EvolvingGeometry],
    config: PicardConfig,
    reference: FlowSolution,
    u0: Optional[ArrayLike] = None,
) -> UniquenessReport:
    """
    Rerun the solver from a seeded random iterate inside the ball and compare the
    fixed points in X_T; they agree within 2 * tolerance when the fixed point is
    unique in the ball.
    """
    rng = np.random.default_rng(config.seed)
    times = config.times()
    if isinstance(geometry, EvolvingGeometry):
        radius = ball_radius(geometry.base, config.delta, float(geometry.radius(config.horizon)))
        start = _ball_sample(geometry.base, times, rng, 0.5 * radius, geometry)
    else:
        start = _ball_sample(geometry, times, rng, 0.5 * ball_radius(geometry, config.delta))
    if u0 is None and not isinstance(geometry, EvolvingGeometry):
        other = solve_existence(geometry, config, start=start)
    else:
        u0 = np.zeros(start.geom.shape) if u0 is None else u0
        other = solve_perturbation(geometry, u0, config, start=start)
    distance = xt_norm(other.u - reference.u).value
    passed = distance < 2.0 * config.tolerance
    logger.info(f"Uniqueness: fixed points from two starts differ by {distance:.3e} in X_T")
    return UniquenessReport(
        distance=distance, tolerance=config.tolerance, passed=passed, start_norm=xt_norm(start).value
    )


@dataclass(frozen=True)
class ContractionMapSpec:
    """The kernel and time grid of a Picard map; constant and data terms cancel in differences."""

    kernel: KernelEvaluator
    times: NDArray

    @property
    def geom(self) -> BaseGeometry:
        return self.kernel.geom

    @property
    def min_scale(self) -> float:
        """Smallest base length scale over the time grid."""
        return float(np.min(self.kernel.scale_at(self.times)))

    def difference(self, u1: SpaceTimeField, u2: SpaceTimeField) -> SpaceTimeField:
        """G(u1) - G(u2)."""
        return duhamel_convolve(self.kernel, nonlinearity_field(u1) - nonlinearity_field(u2))


def static_map_spec(geom: BaseGeometry, horizon: float, time_nodes: int) -> ContractionMapSpec:
    return ContractionMapSpec(make_kernel(KernelTag.K, geom), np.linspace(0.0, horizon, time_nodes + 1))


def evolving_map_spec(evolving: EvolvingGeometry, horizon: float, time_nodes: int) -> ContractionMapSpec:
    return ContractionMapSpec(make_kernel(KernelTag.K_EVOLVING, evolving), np.linspace(0.0, horizon, time_nodes + 1))


class ContractionReport(BaseModel):
    """Lipschitz ratios of a Picard map on the delta-ball"""
    delta: float
    sup_ratio: float
    ratios: List[float]
    pairs: int
    seed: int


def measure_contraction(map_spec: ContractionMapSpec, delta: float, pairs: int, seed: int) -> ContractionReport:
    """
    sup over seeded pairs in the delta-ball of |G(u1) - G(u2)|_X / |u1 - u2|_X.

    The last pair is a tiny perturbation u2 = u1 + 1e-6 v of the first one.
    """
    if pairs < 1:
        raise DomainError("measure_contraction needs pairs >= 1")
    rng = np.random.default_rng(seed)
    radius = ball_radius(map_spec.geom, delta, map_spec.min_scale)
    evolving = map_spec.kernel.evolving
    ratios = []
    first = None
    for i in range(pairs):
        if i == pairs - 1 and first is not None:
            u1 = first
            u2 = u1 + _ball_sample(map_spec.geom, map_spec.times, rng, 1e-6 * radius, evolving)
        else:
            u1 = _ball_sample(map_spec.geom, map_spec.times, rng, radius * rng.uniform(0.5, 1.0), evolving)
            u2 = _ball_sample(map_spec.geom, map_spec.times, rng, radius * rng.uniform(0.5, 1.0), evolving)
            if first is None:
                first = u1
        ratios.append(xt_norm(map_spec.difference(u1, u2)).value / xt_norm(u1 - u2).value)
    report = ContractionReport(delta=radius, sup_ratio=max(ratios), ratios=ratios, pairs=pairs, seed=seed)
    logger.info(f"Contraction on the {radius:.4g}-ball: sup ratio {report.sup_ratio:.4g} over {pairs} pairs")
    return report


def nonlinearity_lipschitz_probe(map_spec: ContractionMapSpec, pairs: int, seed: int, radius: Optional[float] = None) -> FittedConstant:
    """
    Fit C in |Q(u1) - Q(u2)|_Y <= C (|u1|_X + |u2|_X) |u1 - u2|_X on seeded pairs.

    Returns:
        FittedConstant named C2 (static base) or C5 (shrinking base)
    """
    rng = np.random.default_rng(seed)
    radius = 0.5 * graph_validity_threshold(map_spec.geom, map_spec.min_scale) if radius is None else radius
    evolving = map_spec.kernel.evolving
    ratios = []
    for _ in range(pairs):
        u1 = _ball_sample(map_spec.geom, map_spec.times, rng, radius * rng.uniform(0.25, 1.0), evolving)
        u2 = _ball_sample(map_spec.geom, map_spec.times, rng, radius * rng.uniform(0.25, 1.0), evolving)
        dQ = yt_norm(nonlinearity_field(u1) - nonlinearity_field(u2)).value
        ratios.append(dQ / ((xt_norm(u1).value + xt_norm(u2).value) * xt_norm(u1 - u2).value))
    name = "C5" if evolving is not None else "C2"
    return FittedConstant(operator=name, C_fit=max(ratios), samples=pairs, seed=seed, ratios=ratios)


def fit_constants(
    geometry: Union[BaseGeometry, EvolvingGeometry],
    horizon: float,
    time_nodes: int,
    probes: int,
    seed: int,
) -> Tuple[FittedConstants, List[FittedConstant]]:
    """
    Fit C1, C2, C3 over a static base or C4, C5, C6 over a shrinking one.

    Returns:
        (bundle, the individual fits in C-order)
    """
    if isinstance(geometry, EvolvingGeometry):
        spec = evolving_map_spec(geometry, horizon, time_nodes)
        fits = [
            operator_norm_probe(spec.kernel, probes, seed, spec.times),
            nonlinearity_lipschitz_probe(spec, probes, seed + 1),
            initial_data_probe(spec.kernel, probes, seed + 2, spec.times),
        ]
    else:
        spec = static_map_spec(geometry, horizon, time_nodes)
        source = constant_source_probe(spec.kernel, geometry.H0, [horizon / 4, horizon / 2, horizon], time_nodes)
        fits = [
            operator_norm_probe(spec.kernel, probes, seed, spec.times),
            nonlinearity_lipschitz_probe(spec, probes, seed + 1),
            FittedConstant(operator="C3", C_fit=source.C_fit, samples=len(source.horizons), seed=seed, ratios=source.ratios),
        ]
    bundle = FittedConstants(
        evolving=isinstance(geometry, EvolvingGeometry),
        operator=fits[0].C_fit,
        lipschitz=fits[1].C_fit,
        data=fits[2].C_fit,
        samples=probes,
        seed=seed,
    )
    logger.info(f"Fitted constants at T={horizon:g}: {bundle.as_dict()}")
    return bundle, fits


# ========== Derivative estimates ==========

class DerivativeEstimate(BaseModel):
    alpha: int
    k: int
    sup: float
    C: float


class DerivativeEstimateReport(BaseModel):
    """sup of |(t^1/2 grad)^alpha (t d/dt)^k grad u| against c01_norm(u0)"""
    data_norm: float
    estimates: List[DerivativeEstimate]

    def by_order(self) -> Dict[str, float]:
        return {f"alpha={e.alpha},k={e.k}": e.C for e in self.estimates}


def derivative_estimates(solution: FlowSolution, orders: Sequence[Tuple[int, int]]) -> DerivativeEstimateReport:
    """
    Scaled derivative suprema over t in (0, T'] with time derivatives by centred
    differences on the stored grid.

    The sphere transform provides spatial derivatives up to second order, so
    alpha <= 1 there; periodic bases take alpha <= 2.

    Args:
        solution: converged solution
        orders: (alpha, k) pairs with alpha <= 2 and k <= 1

    Raises:
        ResolutionError: fewer than 5 time nodes with k = 1
        DomainError: orders out of range
        UnsupportedOrderError: alpha = 2 on the sphere
        ConvergenceError: the solution did not converge
    """
    u = solution.u
    geom = u.geom
    times = u.times
    for alpha, k in orders:
        if not (0 <= alpha <= 2 and 0 <= k <= 1):
            raise DomainError(f"derivative estimates cover alpha <= 2 and k <= 1, got ({alpha}, {k})")
        if k == 1 and times.size < 5:
            raise ResolutionError("time derivatives need at least 5 time nodes")
        if alpha == 2 and geom.kind == GeometryKind.SPHERE:
            raise UnsupportedOrderError("derivative estimates on the sphere stop at alpha = 1")
    if not solution.converged:
        raise ConvergenceError(
            f"derivative estimates need a converged solution, got {solution.iterations} iterations", solution.ratios
        )
    scale = u.base_radius
    data_norm = c01_norm(GraphFunction(geom, u.values[0]))
    dudt = None
    estimates = []
    for alpha, k in orders:
        if k == 1:
            if dudt is None:
                dudt = np.gradient(u.values, times, axis=0, edge_order=2)
            values = dudt
        else:
            values = u.values
        norms = geom.derivative_norm(values, alpha + 1, scale)
        weights = geom._scale(times ** (alpha / 2.0 + k))
        sup = float(np.max((weights * norms)[1:]))
        estimates.append(DerivativeEstimate(alpha=alpha, k=k, sup=sup, C=sup / data_norm if data_norm > 0 else 0.0))
    return DerivativeEstimateReport(data_norm=data_norm, estimates=estimates)
