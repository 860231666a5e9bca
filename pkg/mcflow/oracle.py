"""
Independent verification of the mild solutions.

fd_solve integrates the nonparametric MCF equation directly by the method of
lines. Its speed is computed from log r on round bases,

    d(log r)/dt = -(n - tr S + p.S.p / (1 + |p|^2)) / r^2,   p, S = grad, Hess of log r,

and from the divergence form u_t = Laplacian u - u_i u_j u_ij / (1 + |grad u|^2)
on flats, so none of the graph_calculus algebra is reused. The linear part
L = Laplacian + |A|^2 is stepped implicitly (Crank-Nicolson, implicit Euler on
the first step) and the remainder explicitly (Adams-Bashforth 2).
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Type

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel

from mcflow.geometry import BaseGeometry, EvolvingGeometry
from mcflow.graph_calculus import SpaceTimeField, graph_quantities
from mcflow.shared.errors import DomainError, GraphValidityError

logger = logging.getLogger(__name__)


# ========== Finite-difference MCF ==========

def graph_speed(geom: BaseGeometry, values: ArrayLike, base_radius: Optional[float] = None) -> NDArray:
    """
    Radial (or vertical) velocity of the graph of `values` under MCF.

    Raises:
        GraphValidityError: the graph reaches the origin or is not finite
    """
    values = np.asarray(values, dtype=float)
    ell = geom.length_scale if base_radius is None else float(base_radius)
    if not np.all(np.isfinite(values)):
        raise GraphValidityError("height function is not finite")
    if not geom.is_curved:
        p = geom.gradient(values, ell)
        S = geom.hessian(values, ell)
        pSp = np.einsum("i...,ij...,j...->...", p, S, p)
        return np.einsum("ii...->...", S) - pSp / (1.0 + np.sum(p ** 2, axis=0))

    r = ell + values
    if np.any(r <= 0):
        raise GraphValidityError("radial graph reaches the origin")
    rho = np.log(r)
    p = geom.unit_gradient(rho)
    S = geom.unit_hessian(rho)
    pSp = np.einsum("i...,ij...,j...->...", p, S, p)
    drho = -(geom.n - np.einsum("ii...->...", S) + pSp / (1.0 + np.sum(p ** 2, axis=0))) / r ** 2
    return r * drho


def fd_solve(geom: BaseGeometry, u0: ArrayLike, T: float, steps: int) -> SpaceTimeField:
    """
    Method-of-lines MCF solution over a static base.

    Args:
        geom: base geometry
        u0: initial heights on the base grid
        T: horizon
        steps: number of uniform time steps

    Returns:
        SpaceTimeField on steps + 1 uniform nodes

    Raises:
        GraphValidityError: the graph degenerates; carries the first failing time
    """
    if T <= 0 or steps < 1:
        raise DomainError(f"fd_solve needs T > 0 and steps >= 1, got T={T}, steps={steps}")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != geom.shape:
        raise DomainError(f"initial data of shape {u0.shape} does not match the grid {geom.shape}")
    dt = T / steps
    times = np.linspace(0.0, T, steps + 1)
    symbol = (geom.unit_eigenvalues + geom.potential_rate) / geom.length_scale ** 2

    def linear(values: NDArray) -> NDArray:
        return geom.from_modes(geom.to_modes(values) * symbol)

    def remainder(values: NDArray, t: float) -> NDArray:
        try:
            return graph_speed(geom, values) - linear(values)
        except GraphValidityError as exc:
            raise GraphValidityError(str(exc), t) from exc

    out = np.empty((steps + 1,) + geom.shape)
    out[0] = u0
    previous = remainder(u0, 0.0)
    modes = geom.to_modes(u0)
    modes = (modes + dt * geom.to_modes(previous)) / (1.0 - dt * symbol)
    out[1] = geom.from_modes(modes)

    explicit = (1.0 + 0.5 * dt * symbol)
    implicit = (1.0 - 0.5 * dt * symbol)
    for i in range(1, steps):
        current = remainder(out[i], times[i])
        forcing = geom.to_modes(1.5 * current - 0.5 * previous)
        modes = (explicit * modes + dt * forcing) / implicit
        out[i + 1] = geom.from_modes(modes)
        previous = current
        if not np.all(np.isfinite(out[i + 1])):
            raise GraphValidityError("finite-difference solution blew up", float(times[i + 1]))

    logger.info(f"fd_solve on {geom.kind.value}: {steps} steps to T={T:g}")
    return SpaceTimeField(geom, times, out)


# ========== Curvature ==========

class CurvatureHistory(BaseModel):
    """Sup over the grid of |A| and |grad A| at every time node"""
    times: List[float]
    sup_A: List[float]
    sup_grad_A: List[float]


def curvature_fields(field: SpaceTimeField):
    """
    Pointwise |A| and |grad A| of every slice.

    On 1-d bases |grad A| is |d kappa / ds|. On 2-d bases it is computed from frame
    derivatives of the shape operator contracted with the inverse metric, which
    drops connection terms of the induced metric.
    """
    geom = field.geom
    base_radius = field.base_radius
    q = graph_quantities(geom, field.values, base_radius, field.times)
    A = np.sqrt(q.A2)
    ell = geom._scale(base_radius)
    if geom.n == 1:
        p = geom.unit_gradient(field.values)[0]
        a = ell + field.values if geom.is_curved else ell
        dkappa = geom.unit_gradient(q.H)[0]
        return A, np.abs(dkappa) / np.sqrt(a ** 2 + p ** 2)
    shape_op = np.einsum("ij...,jk...->ik...", q.g_inv, q.h)
    dS = geom.unit_gradient(shape_op)
    if not geom.is_curved:
        dS = dS / ell
    grad2 = np.einsum("kl...,kij...,lji...->...", q.g_inv, dS, dS)
    return A, np.sqrt(np.maximum(grad2, 0.0))


def curvature_history(field: SpaceTimeField) -> CurvatureHistory:
    A, grad_A = curvature_fields(field)
    axes = tuple(range(1, A.ndim))
    return CurvatureHistory(
        times=field.times.tolist(),
        sup_A=np.max(A, axis=axes).tolist(),
        sup_grad_A=np.max(grad_A, axis=axes).tolist(),
    )


class CurvatureEstimateReport(BaseModel):
    """Pseudolocality-style and interior derivative estimates of one run"""
    kappa0: float
    sup_A: float
    curvature_bound: float
    curvature_passed: bool
    derivative_constant: float
    derivative_passed: bool


def curvature_estimates(field: SpaceTimeField) -> CurvatureEstimateReport:
    """
    sup |A| over [0, T] against 2 kappa(0), and the fitted constant
    sup_{t>0} |grad A|^2 / (kappa^2 (1 + 1/t)) with kappa = sup |A| at t = 0.
    """
    history = curvature_history(field)
    kappa0 = history.sup_A[0]
    sup_A = max(history.sup_A)
    times = np.asarray(history.times)
    grad2 = np.asarray(history.sup_grad_A) ** 2
    fitted = float(np.max(grad2[1:] / (kappa0 ** 2 * (1.0 + 1.0 / times[1:])))) if kappa0 > 0 else 0.0
    report = CurvatureEstimateReport(
        kappa0=kappa0,
        sup_A=sup_A,
        curvature_bound=2.0 * kappa0,
        curvature_passed=sup_A <= 2.0 * kappa0,
        derivative_constant=fitted,
        derivative_passed=bool(np.isfinite(fitted)),
    )
    logger.info(f"Curvature: sup|A| = {sup_A:.6g} against 2 kappa0 = {2 * kappa0:.6g}, derivative constant {fitted:.4g}")
    return report


def centered_difference_curvature(geom: BaseGeometry, values: ArrayLike) -> NDArray:
    """Curvature of a 1-d graph with second-order centred differences."""
    if geom.n != 1:
        raise DomainError("centred-difference curvature is implemented for curves")
    values = np.asarray(values, dtype=float)
    h = 2.0 * np.pi / geom.grid_size
    if geom.is_curved:
        r = geom.length_scale + values
        r1 = (np.roll(r, -1, axis=-1) - np.roll(r, 1, axis=-1)) / (2.0 * h)
        r2 = (np.roll(r, -1, axis=-1) - 2.0 * r + np.roll(r, 1, axis=-1)) / h ** 2
        return (r ** 2 + 2.0 * r1 ** 2 - r * r2) / (r ** 2 + r1 ** 2) ** 1.5
    h = h * geom.length_scale
    u1 = (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) / (2.0 * h)
    u2 = (np.roll(values, -1, axis=-1) - 2.0 * values + np.roll(values, 1, axis=-1)) / h ** 2
    return -u2 / (1.0 + u1 ** 2) ** 1.5


# ========== Exact solutions ==========

class ExactSolution(ABC):
    """A closed-form graphical MCF solution."""

    kind: str = ""

    @abstractmethod
    def evaluate(self, x: ArrayLike, t: float) -> NDArray:
        """Heights at base points x and time t."""

    @abstractmethod
    def time_derivative(self, x: ArrayLike, t: float) -> NDArray:
        pass

    def base(self, geom: BaseGeometry) -> Optional[EvolvingGeometry]:
        """Shrinking base the heights are measured over, None for static bases."""
        return None

    def residual(self, geom: BaseGeometry, t: float) -> float:
        """sup over the grid of |u_t - MCF speed| at time t."""
        points = geom.grid_points()
        values = np.broadcast_to(self.evaluate(points, t), geom.shape)
        evolving = self.base(geom)
        if evolving is None:
            speed = graph_speed(geom, values)
        else:
            R = float(evolving.radius(t))
            speed = graph_speed(geom, values, R) + geom.n / R
        return float(np.max(np.abs(self.time_derivative(points, t) - speed)))

    def field(self, geom: BaseGeometry, times: ArrayLike) -> SpaceTimeField:
        evolving = self.base(geom)
        return SpaceTimeField.from_function(geom, times, self.evaluate, evolving)


@dataclass(frozen=True)
class ShrinkingRound(ExactSolution):
    """Round circle or sphere of initial radius R0 over the static base of radius R0."""

    R0: float = 1.0
    n: int = 1

    @property
    def extinction_time(self) -> float:
        return self.R0 ** 2 / (2.0 * self.n)

    def _radius(self, t: float) -> float:
        if t < 0 or t >= self.extinction_time:
            raise DomainError(f"t={t} outside [0, {self.extinction_time:g})")
        return float(np.sqrt(self.R0 ** 2 - 2.0 * self.n * t))

    def evaluate(self, x: ArrayLike, t: float) -> NDArray:
        return np.full(np.shape(x)[: np.ndim(x) - (self.n - 1)], self._radius(t) - self.R0)

    def time_derivative(self, x: ArrayLike, t: float) -> NDArray:
        return np.full(np.shape(x)[: np.ndim(x) - (self.n - 1)], -self.n / self._radius(t))


class ShrinkingCircle(ShrinkingRound):
    kind = "ShrinkingCircle"

    def __init__(self, R0: float = 1.0):
        super().__init__(R0, 1)


class ShrinkingSphere(ShrinkingRound):
    kind = "ShrinkingSphere"

    def __init__(self, R0: float = 1.0):
        super().__init__(R0, 2)


@dataclass(frozen=True)
class StaticFlat(ExactSolution):
    kind = "StaticFlat"

    def evaluate(self, x: ArrayLike, t: float) -> NDArray:
        return np.zeros(np.shape(x)[:1] if np.ndim(x) == 1 else np.shape(x)[:-1])

    def time_derivative(self, x: ArrayLike, t: float) -> NDArray:
        return self.evaluate(x, t)


@dataclass(frozen=True)
class ConcentricDifference(ExactSolution):
    """Round solution of radius R0' as a graph over the shrinking round base of radius R0."""

    kind = "ConcentricDifference"
    R0: float = 1.0
    R0_other: float = 1.05
    n: int = 1

    def _radii(self, t: float):
        if t < 0 or 2.0 * self.n * t >= min(self.R0, self.R0_other) ** 2:
            raise DomainError(f"t={t} past the extinction of one of the two round solutions")
        return np.sqrt(self.R0_other ** 2 - 2.0 * self.n * t), np.sqrt(self.R0 ** 2 - 2.0 * self.n * t)

    def evaluate(self, x: ArrayLike, t: float) -> NDArray:
        outer, inner = self._radii(t)
        return np.full(np.shape(x)[: np.ndim(x) - (self.n - 1)], outer - inner)

    def time_derivative(self, x: ArrayLike, t: float) -> NDArray:
        outer, inner = self._radii(t)
        return np.full(np.shape(x)[: np.ndim(x) - (self.n - 1)], -self.n / outer + self.n / inner)

    def base(self, geom: BaseGeometry) -> Optional[EvolvingGeometry]:
        return EvolvingGeometry(geom.with_radius(self.R0), 0.99 * self.R0 ** 2 / (2.0 * self.n))


CATALOG: Dict[str, Type[ExactSolution]] = {
    "ShrinkingCircle": ShrinkingCircle,
    "ShrinkingSphere": ShrinkingSphere,
    "StaticFlat": StaticFlat,
    "ConcentricDifference": ConcentricDifference,
}


def exact_solution(kind: str, **params) -> ExactSolution:
    if kind not in CATALOG:
        raise DomainError(f"unknown exact solution {kind!r}; choose from {sorted(CATALOG)}")
    return CATALOG[kind](**params)


def exact_eval(kind: str, params: Dict[str, float], x: ArrayLike, t: float) -> NDArray:
    """
    Catalog value at base points x and time t.

    Raises:
        DomainError: t past extinction or unknown kind
    """
    return exact_solution(kind, **params).evaluate(x, t)


# ========== Comparison helpers ==========

class FieldComparison(BaseModel):
    max_abs: float
    shared_times: int
    worst_time: Optional[float]


def compare_fields(a: SpaceTimeField, b: SpaceTimeField) -> FieldComparison:
    """Uniform difference of two fields on their shared time nodes."""
    if a.geom != b.geom:
        raise DomainError("fields live on different bases")
    tol = 1e-12 * max(a.horizon, b.horizon)
    index_b = np.searchsorted(b.times, a.times - tol)
    index_b = np.minimum(index_b, b.times.size - 1)
    shared = np.abs(b.times[index_b] - a.times) <= tol
    if not np.any(shared):
        raise DomainError("fields share no time nodes")
    diff = np.abs(a.values[shared] - b.values[index_b[shared]])
    per_time = diff.reshape(diff.shape[0], -1).max(axis=1)
    worst = int(np.argmax(per_time))
    return FieldComparison(
        max_abs=float(per_time[worst]),
        shared_times=int(np.sum(shared)),
        worst_time=float(a.times[shared][worst]),
    )


def radial_profile(field: SpaceTimeField) -> SpaceTimeField:
    """Heights over a shrinking base rewritten as heights over the static initial base."""
    if field.evolving is None:
        return field
    R = field.geom._scale(field.base_radius)
    return SpaceTimeField(field.geom, field.times, R + field.values - field.evolving.R0)
