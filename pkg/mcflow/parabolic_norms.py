"""
Parabolic norms over the cylinders Omega(x, r) = B(x, r) x (r^2/2, r^2).

    |u|_X  = sup|u| + sup|grad u| + sup_x sup_r r^{2/(n+4)} |hess u|_{L^{n+4}(Omega(x, r))}
    |Q|_Y  =                        sup_x sup_r r^{2/(n+4)} |Q|_{L^{n+4}(Omega(x, r))}
    |f|_C01 = sup|f| + sup|grad f|

Radii run over the dyadic ladder r_j = sqrt(T) 2^{-j/2} down to the grid spacing.
Integrals use the exact integral of the piecewise-linear interpolant over the
window (clipped trapezoid weights) in time and in space, so constants are
integrated exactly. Over a shrinking base the ball at time t_i is the angular
window of half-width r / R(t_i), measured with the metric of that time.
"""
from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field

from mcflow.geometry import BaseGeometry, GeometryKind
from mcflow.graph_calculus import GraphFunction, SpaceTimeField, c01_profile
from mcflow.shared.errors import DomainError, ResolutionError

logger = logging.getLogger(__name__)

# sphere cylinder centers are taken on every k-th latitude and longitude
SPHERE_CENTER_STRIDE = 2
# sub-cell samples per axis when weighting plane discs
DISC_SUBSAMPLES = 8


class NormReport(BaseModel):
    """A parabolic norm and its three summands"""
    value: float
    sup_u: float
    sup_grad: float
    hessian_term: float = Field(..., description="Weighted L^{n+4} term (of the field itself for Y norms)")
    argmax_x: List[float] = Field(default_factory=list)
    argmax_r: Optional[float] = None
    rungs: int = 0
    grid_size: int = 0
    time_nodes: int = 0
    refinement_stable: Optional[bool] = None

    def to_json(self) -> dict:
        return self.model_dump(include={"value", "sup_u", "sup_grad", "hessian_term", "argmax_x", "argmax_r"})


# ========== Quadrature ==========

def clipped_trapezoid_weights(nodes: NDArray, a: float, b: float) -> NDArray:
    """
    Weights w with sum(w f) equal to the integral over [a, b] of the piecewise-linear
    interpolant of f at sorted `nodes`.
    """
    nodes = np.asarray(nodes, dtype=float)
    weights = np.zeros_like(nodes)
    if b <= a:
        return weights
    left, right = nodes[:-1], nodes[1:]
    lo = np.clip(a, left, right)
    hi = np.clip(b, left, right)
    h = right - left
    active = hi > lo
    lo, hi, left, right, h = lo[active], hi[active], left[active], right[active], h[active]
    idx = np.flatnonzero(active)
    np.add.at(weights, idx, ((right - lo) ** 2 - (right - hi) ** 2) / (2.0 * h))
    np.add.at(weights, idx + 1, ((hi - left) ** 2 - (lo - left) ** 2) / (2.0 * h))
    return weights


def dyadic_radii(T: float, spacing: float) -> NDArray:
    """sqrt(T) 2^{-j/2} for j = 0, 1, ... while the radius stays above the grid spacing."""
    radii = []
    r = np.sqrt(T)
    while r >= spacing:
        radii.append(r)
        r /= np.sqrt(2.0)
    if not radii:
        radii.append(np.sqrt(T))
    return np.array(radii)


def _periodic_stencil(geom: BaseGeometry, radius_unit: float, scale: float) -> NDArray:
    """Ball weights around grid point 0, in the physical metric at length scale `scale`."""
    N = geom.grid_size
    h = 2.0 * np.pi / N
    offsets = h * (np.arange(N) - N // 2)  # sorted, covering [-pi, pi)

    if geom.kind == GeometryKind.PERIODIC_PLANE:
        sub = (np.arange(DISC_SUBSAMPLES) + 0.5) / DISC_SUBSAMPLES - 0.5
        cx = (offsets[:, None] + h * sub[None, :]).reshape(-1)
        inside = (cx[:, None] ** 2 + cx[None, :] ** 2) <= radius_unit ** 2
        cover = inside.reshape(N, DISC_SUBSAMPLES, N, DISC_SUBSAMPLES).mean(axis=(1, 3))
        return np.roll(cover * (h * scale) ** 2, (-(N // 2), -(N // 2)), axis=(0, 1))

    nodes = np.append(offsets, np.pi)
    weights = clipped_trapezoid_weights(nodes, -radius_unit, radius_unit)
    weights[0] += weights[-1]
    # index j holds the weight of offset j
    return np.roll(weights[:-1] * scale, -(N // 2))


def _correlate(values: NDArray, stencil: NDArray) -> NDArray:
    """Circular correlation sum_j stencil[j] values[c + j] for every center c."""
    axes = tuple(range(-stencil.ndim, 0))
    spectrum = np.fft.fftn(values, axes=axes) * np.conj(np.fft.fftn(stencil, axes=axes))
    return np.real(np.fft.ifftn(spectrum, axes=axes))


def _ball_integrals(geom: BaseGeometry, values: NDArray, r: float, scale: float) -> Tuple[NDArray, NDArray]:
    """
    Integral of `values` over B(x, r) for each center x.

    Returns:
        (integrals, center indices); every grid point is a center except on the
        sphere, where centers are subsampled
    """
    radius_unit = r / scale
    if geom.kind == GeometryKind.SPHERE:
        points = geom.grid_points()
        centers = points[::SPHERE_CENTER_STRIDE, ::SPHERE_CENTER_STRIDE].reshape(-1, 2)
        flat = points.reshape(-1, 2)
        gamma = geom.unit_distance(centers[:, None, :], flat[None, :, :])
        mask = (gamma < radius_unit) * geom.quadrature_weights(scale).reshape(-1)[None, :]
        index = np.argwhere(np.ones(geom.shape, dtype=bool)[::SPHERE_CENTER_STRIDE, ::SPHERE_CENTER_STRIDE])
        index[:, 0] *= SPHERE_CENTER_STRIDE
        index[:, 1] *= SPHERE_CENTER_STRIDE
        return mask @ values.reshape(-1), index
    stencil = _periodic_stencil(geom, radius_unit, scale)
    index = np.argwhere(np.ones(geom.shape, dtype=bool))
    return _correlate(values, stencil).reshape(-1), index


def weighted_cylinder_term(field: SpaceTimeField, density: NDArray, T: float) -> Tuple[float, List[float], Optional[float], int]:
    """
    sup over centers x and dyadic radii r of r^{2/p} (integral of density over Omega(x, r))^{1/p},
    p = n + 4, where density = |f|^p has the shape of field.values.

    Returns:
        (value, argmax point, argmax radius, number of rungs)

    Raises:
        ResolutionError: the time grid does not resolve the smallest cylinder
    """
    geom = field.geom
    p = geom.n + 4
    times = field.times
    radii = dyadic_radii(T, geom.spacing)
    dt = float(np.max(np.diff(times)))
    if radii[-1] ** 2 / 2.0 < dt:
        raise ResolutionError(
            f"time step {dt:.3g} does not resolve the smallest cylinder r={radii[-1]:.3g} "
            f"(need r^2/2 >= dt); refine the time grid"
        )

    best, best_x, best_r = 0.0, [], None
    points = geom.grid_points()
    for r in radii:
        w_time = clipped_trapezoid_weights(times, r ** 2 / 2.0, r ** 2)
        active = np.flatnonzero(w_time)
        if field.evolving is None:
            integrals, index = _ball_integrals(geom, np.tensordot(w_time, density, axes=(0, 0)), r, geom.length_scale)
        else:
            integrals = 0.0
            for i in active:
                part, index = _ball_integrals(geom, density[i], r, field.scale_at(i))
                integrals = integrals + w_time[i] * part
        integrals = np.maximum(integrals, 0.0)
        values = r ** (2.0 / p) * integrals ** (1.0 / p)
        j = int(np.argmax(values))
        if values[j] > best:
            best = float(values[j])
            best_x = np.atleast_1d(points[tuple(index[j])]).astype(float).tolist()
            best_r = float(r)
    return best, best_x, best_r, len(radii)


# ========== Norms ==========

def _restricted(field: SpaceTimeField, T: Optional[float]) -> Tuple[SpaceTimeField, float]:
    T = field.horizon if T is None else float(T)
    if T <= 0 or T > field.horizon * (1.0 + 1e-12):
        raise DomainError(f"T={T} outside (0, {field.horizon}] covered by the field")
    return field.restrict(T), T


def xt_norm(u: SpaceTimeField, T: Optional[float] = None, check_refinement: bool = False) -> NormReport:
    """
    X_T norm of a space-time field.

    Args:
        u: field on [0, T] (over a shrinking base when u.evolving is set)
        T: horizon, default the last time node
        check_refinement: also evaluate on every other time node and flag 1% agreement

    Returns:
        NormReport
    """
    field, T = _restricted(u, T)
    geom = field.geom
    scale = field.base_radius
    axes = tuple(range(1, field.values.ndim))
    sup_u = float(np.max(np.abs(field.values)))
    sup_grad = float(np.max(np.max(geom.derivative_norm(field.values, 1, scale), axis=axes)))
    hess = geom.derivative_norm(field.values, 2, scale)
    term, x, r, rungs = weighted_cylinder_term(field, hess ** (geom.n + 4), T)
    report = NormReport(
        value=sup_u + sup_grad + term,
        sup_u=sup_u,
        sup_grad=sup_grad,
        hessian_term=term,
        argmax_x=x,
        argmax_r=r,
        rungs=rungs,
        grid_size=geom.grid_size,
        time_nodes=field.times.size,
    )
    if check_refinement:
        report.refinement_stable = _refinement_stable(field, report.value, lambda f: xt_norm(f).value)
    return report


def yt_norm(Q: SpaceTimeField, T: Optional[float] = None, check_refinement: bool = False) -> NormReport:
    """Y_T norm: the weighted L^{n+4} cylinder term of the field itself."""
    field, T = _restricted(Q, T)
    term, x, r, rungs = weighted_cylinder_term(field, np.abs(field.values) ** (field.geom.n + 4), T)
    report = NormReport(
        value=term,
        sup_u=0.0,
        sup_grad=0.0,
        hessian_term=term,
        argmax_x=x,
        argmax_r=r,
        rungs=rungs,
        grid_size=field.geom.grid_size,
        time_nodes=field.times.size,
    )
    if check_refinement:
        report.refinement_stable = _refinement_stable(field, term, lambda f: yt_norm(f).value)
    return report


def _refinement_stable(field: SpaceTimeField, value: float, norm) -> Optional[bool]:
    keep = np.arange(0, field.times.size, 2)
    if keep[-1] != field.times.size - 1 or keep.size < 3:
        return None
    coarse = SpaceTimeField(field.geom, field.times[keep], field.values[keep], field.evolving)
    try:
        coarse_value = norm(coarse)
    except ResolutionError:
        return None
    return bool(abs(coarse_value - value) <= 0.01 * max(abs(value), 1e-300))


def c01_norm(f: GraphFunction) -> float:
    """sup|f| + sup|grad f| with the spectral gradient."""
    return float(c01_profile(f.geom, f.values))


def metric_equivalence_check(u: SpaceTimeField, T: Optional[float] = None) -> dict:
    """
    Compare the X_T norm over a shrinking base with the same field measured in the
    fixed initial metric; the two agree up to C0^{(n+6)/(n+4)}, C0 = R(0)^2 / R(T)^2.
    """
    if u.evolving is None:
        raise DomainError("metric equivalence needs a field over a shrinking base")
    evolving_value = xt_norm(u, T).value
    fixed = SpaceTimeField(u.geom, u.times, u.values)
    fixed_value = xt_norm(fixed, T).value
    C0 = u.evolving.metric_equivalence_constant(u.horizon if T is None else T)
    bound = C0 ** ((u.geom.n + 6) / (u.geom.n + 4))
    lo, hi = min(evolving_value, fixed_value), max(evolving_value, fixed_value)
    return {
        "evolving": evolving_value,
        "fixed": fixed_value,
        "C0": C0,
        "bound": bound,
        "passed": bool(hi <= bound * lo * (1.0 + 1e-12)) if lo > 0 else bool(hi == 0),
    }
