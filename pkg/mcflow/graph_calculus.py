"""
Normal graphs over a model base and the nonlinearity of graphical MCF.

A height function u describes the graph {x + u(x) n(x)}. On the circle and the
sphere the graph is radial, r = R + u, with R the (possibly time dependent)
base radius; on the flats it is an ordinary graph. The normal velocity of the
graph gives du/dt = -w H_u, and the nonlinearity is defined by subtraction:

    Q(u) = -w H_u + H0 - L u,    L = Laplacian + |A|^2

so du/dt = -H0 + L u + Q(u) holds identically. The same formula evaluated at
base radius R(t) is the nonlinearity over a shrinking round base, which has no
-H0 term because the base itself moves with speed H0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel

from mcflow.geometry import BaseGeometry, EvolvingGeometry
from mcflow.shared.errors import DomainError, GraphValidityError

logger = logging.getLogger(__name__)

VALIDITY_FACTOR = 0.3


@dataclass(frozen=True)
class GraphFunction:
    """A height function on the base grid, optionally labelled with a time."""

    geom: BaseGeometry
    values: NDArray
    time: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.geom.shape:
            raise DomainError(f"values of shape {values.shape} do not match grid {self.geom.shape}")
        object.__setattr__(self, "values", values)

    def with_values(self, values: ArrayLike) -> "GraphFunction":
        return GraphFunction(self.geom, values, self.time)


@dataclass(frozen=True)
class SpaceTimeField:
    """Values on the base grid at times 0 = t_0 < ... < t_J.

    When `evolving` is set the field lives over the shrinking family and every
    metric quantity at t_i uses the radius R(t_i).
    """

    geom: BaseGeometry
    times: NDArray
    values: NDArray
    evolving: Optional[EvolvingGeometry] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise DomainError("a space-time field needs at least two time nodes")
        if abs(times[0]) > 0.0 or np.any(np.diff(times) <= 0):
            raise DomainError("time grid must start at 0 and increase strictly")
        if values.shape != (times.size,) + self.geom.shape:
            raise DomainError(f"values of shape {values.shape} do not match {(times.size,) + self.geom.shape}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, geom: BaseGeometry, times: ArrayLike, evolving: Optional[EvolvingGeometry] = None) -> "SpaceTimeField":
        times = np.asarray(times, dtype=float)
        return cls(geom, times, np.zeros((times.size,) + geom.shape), evolving)

    @classmethod
    def from_function(cls, geom: BaseGeometry, times: ArrayLike, func, evolving: Optional[EvolvingGeometry] = None) -> "SpaceTimeField":
        """Sample func(points, t) at every time node."""
        times = np.asarray(times, dtype=float)
        points = geom.grid_points()
        values = np.stack([np.broadcast_to(func(points, t), geom.shape) for t in times])
        return cls(geom, times, values, evolving)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def base_radius(self) -> Union[float, NDArray]:
        """Length scale per time node (constant unless evolving)."""
        if self.evolving is not None:
            return self.evolving.radius(self.times)
        return self.geom.length_scale

    def scale_at(self, i: int) -> float:
        if self.evolving is not None:
            return float(self.evolving.radius(self.times[i]))
        return self.geom.length_scale

    def geometry_at(self, i: int) -> BaseGeometry:
        if self.evolving is not None:
            return self.evolving.geometry_at(self.times[i])
        return self.geom

    def slice(self, i: int) -> GraphFunction:
        return GraphFunction(self.geometry_at(i), self.values[i], float(self.times[i]))

    def with_values(self, values: ArrayLike) -> "SpaceTimeField":
        return SpaceTimeField(self.geom, self.times, values, self.evolving)

    def restrict(self, T: float) -> "SpaceTimeField":
        keep = self.times <= T * (1.0 + 1e-12)
        return SpaceTimeField(self.geom, self.times[keep], self.values[keep], self.evolving)

    def _check_compatible(self, other: "SpaceTimeField"):
        if other.geom != self.geom or other.times.shape != self.times.shape or not np.allclose(other.times, self.times):
            raise DomainError("space-time fields live on different grids")

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def scaled(self, factor: float) -> "SpaceTimeField":
        return self.with_values(factor * self.values)

    def to_frame(self, stride: int = 1) -> pd.DataFrame:
        """Snapshot table with columns t, grid_index, theta_or_coords, u.

        theta_or_coords is the angle or position on 1-d bases and "a;b" (plane
        position or colatitude;longitude) on 2-d bases.
        """
        points = self.geom.grid_points()
        if self.geom.n == 1:
            coords = points.reshape(-1)
        else:
            flat = points.reshape(-1, 2)
            coords = np.array([f"{a:.17g};{b:.17g}" for a, b in flat], dtype=object)
        size = coords.shape[0]
        keep = np.arange(0, self.times.size, stride)
        if keep[-1] != self.times.size - 1:
            keep = np.append(keep, self.times.size - 1)
        return pd.DataFrame(
            {
                "t": np.repeat(self.times[keep], size),
                "grid_index": np.tile(np.arange(size), keep.size),
                "theta_or_coords": np.tile(coords, keep.size),
                "u": self.values[keep].reshape(-1),
            }
        )


class GraphQuantities(NamedTuple):
    v: NDArray  # relative area element
    w: NDArray  # speed factor
    H: NDArray  # mean curvature of the graph
    A2: NDArray  # |A|^2 of the graph
    g_inv: NDArray  # inverse induced metric in the unit frame
    h: NDArray  # second fundamental form in the unit frame


def graph_validity_threshold(geom: BaseGeometry, scale: Optional[float] = None) -> float:
    """delta_geo = 0.3 * min(R, period / 2 pi)."""
    ell = geom.length_scale if scale is None else float(scale)
    return VALIDITY_FACTOR * ell


def _first_failing_time(bad: NDArray, times: Optional[NDArray]) -> Optional[float]:
    if times is None or bad.ndim == 0:
        return None
    axes = tuple(range(1, bad.ndim))
    failing = np.flatnonzero(np.any(bad, axis=axes) if axes else bad)
    return float(times[failing[0]]) if failing.size else None


def graph_quantities(
    geom: BaseGeometry,
    values: ArrayLike,
    base_radius: Union[None, float, NDArray] = None,
    times: Optional[NDArray] = None,
) -> GraphQuantities:
    """
    Area element, speed factor and curvature of the graph of `values`.

    Args:
        geom: base geometry
        values: heights, shape geom.shape or (J+1,) + geom.shape
        base_radius: base length scale (scalar or one per time slice)
        times: time labels of the leading axis, used in error messages

    Returns:
        GraphQuantities

    Raises:
        GraphValidityError: the radial graph reaches the origin or is not finite
    """
    values = np.asarray(values, dtype=float)
    ell = geom._scale(geom.length_scale if base_radius is None else base_radius)
    n = geom.n
    eye = np.eye(n).reshape((n, n) + (1,) * values.ndim)

    if not np.all(np.isfinite(values)):
        raise GraphValidityError("height function is not finite", _first_failing_time(~np.isfinite(values), times))

    if geom.is_curved:
        r = ell + values
        if np.any(r <= 0):
            raise GraphValidityError("radial graph reaches the origin", _first_failing_time(r <= 0, times))
        p = geom.unit_gradient(values)
        S = geom.unit_hessian(values)
        q2 = np.sum(p ** 2, axis=0)
        root = np.sqrt(r ** 2 + q2)
        w = root / r
        v = r ** (n - 1) * root / ell ** n
        pp = p[:, None] * p[None, :]
        g_inv = (eye - pp / (r ** 2 + q2)) / r ** 2
        h = (r ** 2 * eye + 2.0 * pp - r * S) / root
    else:
        p = geom.unit_gradient(values) / ell
        S = geom.unit_hessian(values) / ell ** 2
        q2 = np.sum(p ** 2, axis=0)
        W = np.sqrt(1.0 + q2)
        v = w = W
        pp = p[:, None] * p[None, :]
        g_inv = eye - pp / (1.0 + q2)
        h = -S / W

    H = np.einsum("ij...,ij...->...", g_inv, h)
    shape_op = np.einsum("ij...,jk...->ik...", g_inv, h)
    A2 = np.einsum("ij...,ji...->...", shape_op, shape_op)
    return GraphQuantities(v, w, H, A2, g_inv, h)


def c01_profile(geom: BaseGeometry, values: ArrayLike, scale: Union[None, float, NDArray] = None) -> NDArray:
    """sup|f| + sup|grad f| over the grid, one value per leading slice."""
    values = np.asarray(values, dtype=float)
    axes = tuple(range(-len(geom.shape), 0))
    grad = geom.derivative_norm(values, 1, scale)
    return np.max(np.abs(values), axis=axes) + np.max(grad, axis=axes)


def _check_smallness(geom: BaseGeometry, values: NDArray, ell, times: Optional[NDArray]):
    threshold = VALIDITY_FACTOR * np.asarray(ell, dtype=float).reshape(-1)
    c01 = np.atleast_1d(c01_profile(geom, values, ell))
    bad = c01 >= threshold
    if np.any(bad):
        raise GraphValidityError(
            f"C^0,1 norm {float(np.max(c01)):.4g} exceeds the smallness threshold "
            f"{float(np.min(threshold)):.4g} under which Q(u) is quadratically bounded",
            _first_failing_time(bad, times),
        )


def linear_operator_values(geom: BaseGeometry, values: ArrayLike, base_radius: Union[None, float, NDArray] = None) -> NDArray:
    """L u = Laplacian u + |A|^2 u at the given base radius."""
    values = np.asarray(values, dtype=float)
    ell = geom._scale(geom.length_scale if base_radius is None else base_radius)
    return geom.unit_laplacian(values) / ell ** 2 + geom.potential_rate * values / ell ** 2


def nonlinearity_values(
    geom: BaseGeometry,
    values: ArrayLike,
    base_radius: Union[None, float, NDArray] = None,
    times: Optional[NDArray] = None,
    check_smallness: bool = True,
) -> NDArray:
    """
    Q(u) = -w H_u + H0 - L u, vectorized over leading time slices.

    Raises:
        GraphValidityError: C^0,1 norm at or above the smallness threshold
    """
    values = np.asarray(values, dtype=float)
    ell = geom._scale(geom.length_scale if base_radius is None else base_radius)
    if check_smallness:
        _check_smallness(geom, values, geom.length_scale if base_radius is None else base_radius, times)
    quantities = graph_quantities(geom, values, base_radius, times)
    H0 = geom.n / ell if geom.is_curved else 0.0
    return -quantities.w * quantities.H + H0 - linear_operator_values(geom, values, base_radius)


# ========== GraphFunction operations ==========

def area_element_v(u: GraphFunction) -> GraphFunction:
    return u.with_values(graph_quantities(u.geom, u.values).v)


def speed_w(u: GraphFunction) -> GraphFunction:
    return u.with_values(graph_quantities(u.geom, u.values).w)


def mean_curvature_graph(u: GraphFunction) -> GraphFunction:
    """Mean curvature of the graph, positive on convex round hypersurfaces."""
    return u.with_values(graph_quantities(u.geom, u.values).H)


def second_fundamental_form_norm(u: GraphFunction) -> GraphFunction:
    return u.with_values(np.sqrt(graph_quantities(u.geom, u.values).A2))


def linearized_L(u: GraphFunction) -> GraphFunction:
    return u.with_values(linear_operator_values(u.geom, u.values))


def nonlinearity_Q(u: GraphFunction) -> GraphFunction:
    return u.with_values(nonlinearity_values(u.geom, u.values))


def nonlinearity_Q_t(u: GraphFunction, evolving: EvolvingGeometry, t: float) -> GraphFunction:
    """Nonlinearity over the shrinking base at time t."""
    R = evolving.radius(t)
    values = nonlinearity_values(evolving.base, u.values, R)
    return GraphFunction(evolving.geometry_at(t), values, t)


def nonlinearity_field(u: SpaceTimeField, check_smallness: bool = True) -> SpaceTimeField:
    """Q or Q_t of every time slice, depending on whether the base evolves."""
    base_radius = u.base_radius if u.evolving is not None else None
    values = nonlinearity_values(u.geom, u.values, base_radius, u.times, check_smallness)
    return u.with_values(values)


# ========== Quadratic bounds ==========

class QuadraticBoundReport(BaseModel):
    """Pointwise check of the quadratic and difference bounds on Q"""
    C: float
    fitted_C_quadratic: float
    fitted_C_difference: float
    max_abs_Q: float
    max_abs_dQ: float
    samples: int
    passed: bool


def _safe_ratio(num: NDArray, den: NDArray) -> float:
    tiny = 1e-300
    ok = den > tiny
    worst = float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0
    if np.any((~ok) & (num > 1e-14)):
        return float("inf")
    return worst


def check_quadratic_bounds(u: GraphFunction, v: GraphFunction, C: float) -> QuadraticBoundReport:
    """
    Check |Q(u)| <= C(|u|^2 + |grad u|^2 + |hess u|(|grad u| + |u|)) and
    |Q(u) - Q(v)| <= C[(|u|_C01 + |grad v|_C01)(|d| + |grad d| + |hess d|)
    + (|grad d| + |d|)|hess u|] pointwise, d = u - v.

    Returns:
        QuadraticBoundReport with the smallest constants that work on the grid
    """
    if u.geom != v.geom:
        raise DomainError("u and v must live on the same base")
    geom = u.geom
    Qu = nonlinearity_values(geom, u.values)
    Qv = nonlinearity_values(geom, v.values)

    u0, u1, u2 = (geom.derivative_norm(u.values, k) for k in range(3))
    v1, v2 = geom.derivative_norm(v.values, 1), geom.derivative_norm(v.values, 2)
    d = u.values - v.values
    d0, d1, d2 = (geom.derivative_norm(d, k) for k in range(3))

    quadratic = u0 ** 2 + u1 ** 2 + u2 * (u1 + u0)
    a = float(np.max(u0) + np.max(u1) + np.max(v1) + np.max(v2))
    difference = a * (d0 + d1 + d2) + (d1 + d0) * u2

    fitted_q = _safe_ratio(np.abs(Qu), quadratic)
    fitted_d = _safe_ratio(np.abs(Qu - Qv), difference)
    passed = fitted_q <= C and fitted_d <= C
    if not passed:
        logger.warning(f"Quadratic bound check failed: fitted ({fitted_q:.4g}, {fitted_d:.4g}) > C={C}")
    return QuadraticBoundReport(
        C=C,
        fitted_C_quadratic=fitted_q,
        fitted_C_difference=fitted_d,
        max_abs_Q=float(np.max(np.abs(Qu))),
        max_abs_dQ=float(np.max(np.abs(Qu - Qv))),
        samples=int(Qu.size),
        passed=passed,
    )


def quadratic_scaling_profile(u: GraphFunction, scales: Sequence[float]) -> List[float]:
    """sup|Q(s u)| / s^2 for each scale s."""
    return [float(np.max(np.abs(nonlinearity_values(u.geom, s * u.values)))) / s ** 2 for s in scales]
