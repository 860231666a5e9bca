"""
Base hypersurfaces with exactly known metric, curvature and spectrum.

Four model bases are supported: the circle and the round 2-sphere (embedded,
constant second fundamental form) and the flat periodic line and plane. Fields
on a base are sampled on a uniform periodic grid (a Gauss-Legendre latitude by
uniform longitude grid on the sphere) and every spatial derivative is spectral.

All transforms work at unit scale: angles on the circle and sphere, x/ell on the
flats where ell = period/(2*pi). Intrinsic derivatives divide by powers of the
length scale, which lets the same geometry serve a shrinking family of spheres.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln, lpmv

from mcflow.shared.errors import DomainError, UnsupportedOrderError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class GeometryKind(str, Enum):
    CIRCLE = "circle"
    PERIODIC_LINE = "periodic_line"
    PERIODIC_PLANE = "periodic_plane"
    SPHERE = "sphere"


_DIMENSION = {
    GeometryKind.CIRCLE: 1,
    GeometryKind.PERIODIC_LINE: 1,
    GeometryKind.PERIODIC_PLANE: 2,
    GeometryKind.SPHERE: 2,
}

# volume of the unit n-ball
UNIT_BALL_VOLUME = {1: 2.0, 2: np.pi}


class SphereTables(NamedTuple):
    cos_colat: NDArray  # Gauss-Legendre nodes, north to south
    weights: NDArray
    colat: NDArray
    legendre: NDArray  # normalized P_l^m(cos colat), shape (mmax+1, lmax+1, nlat)
    legendre_dtheta: NDArray  # derivative with respect to colatitude
    lmax: int
    mmax: int


@functools.lru_cache(maxsize=16)
def _sphere_tables(nlat: int, nlon: int) -> SphereTables:
    x, w = np.polynomial.legendre.leggauss(nlat)
    x, w = x[::-1].copy(), w[::-1].copy()
    colat = np.arccos(x)
    sin_colat = np.sqrt(1.0 - x * x)
    lmax = nlat - 1
    mmax = min(lmax, nlon // 2 - 1)

    legendre = np.zeros((mmax + 1, lmax + 1, nlat))
    for m in range(mmax + 1):
        for l in range(m, lmax + 1):
            norm = np.sqrt((2 * l + 1) / (4.0 * np.pi) * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))
            legendre[m, l] = norm * lpmv(m, l, x)

    # (x^2 - 1) dP_l^m/dx = l x P_l^m - (l+m) P_{l-1}^m, rewritten for the normalized table
    dtheta = np.zeros_like(legendre)
    for m in range(mmax + 1):
        for l in range(m, lmax + 1):
            lower = 0.0
            if l - 1 >= m:
                lower = np.sqrt((2 * l + 1) / (2 * l - 1) * (l - m) * (l + m)) * legendre[m, l - 1]
            dtheta[m, l] = (l * x * legendre[m, l] - lower) / sin_colat

    logger.debug(f"Built sphere transform tables nlat={nlat} nlon={nlon} lmax={lmax}")
    return SphereTables(x, w, colat, legendre, dtheta, lmax, mmax)


@dataclass(frozen=True)
class BaseGeometry:
    """A model base hypersurface and its sampling grid.

    Attributes:
        kind: which model base
        n: intrinsic dimension
        radius_or_period: radius (circle, sphere) or period (flats)
        grid_size: points per period; the sphere has grid_size/2 latitudes
    """

    kind: GeometryKind
    n: int
    radius_or_period: float
    grid_size: int

    def __post_init__(self):
        if self.grid_size < 16 or self.grid_size % 2:
            raise DomainError(f"grid size must be even and >= 16, got {self.grid_size}")
        if not self.radius_or_period > 0:
            raise DomainError(f"radius_or_period must be positive, got {self.radius_or_period}")
        if _DIMENSION[self.kind] != self.n:
            raise DomainError(f"{self.kind.value} has dimension {_DIMENSION[self.kind]}, got n={self.n}")

    # ========== Constants ==========

    @property
    def is_curved(self) -> bool:
        return self.kind in (GeometryKind.CIRCLE, GeometryKind.SPHERE)

    @property
    def length_scale(self) -> float:
        """Radius on curved bases, period/(2 pi) on flats."""
        if self.is_curved:
            return float(self.radius_or_period)
        return float(self.radius_or_period) / TWO_PI

    @property
    def radius(self) -> float:
        if not self.is_curved:
            raise DomainError(f"{self.kind.value} has no radius")
        return float(self.radius_or_period)

    @property
    def A2(self) -> float:
        """|A|^2, constant on every model base."""
        return self.n / self.length_scale ** 2 if self.is_curved else 0.0

    @property
    def H0(self) -> float:
        return self.n / self.length_scale if self.is_curved else 0.0

    @property
    def kappa(self) -> float:
        return float(np.sqrt(self.A2))

    @property
    def potential_rate(self) -> float:
        """|A|^2 in unit-scale time."""
        return float(self.n) if self.is_curved else 0.0

    @property
    def injectivity_radius(self) -> float:
        """pi R on curved bases, half a period on flats."""
        return np.pi * self.length_scale

    @property
    def shape(self) -> Tuple[int, ...]:
        N = self.grid_size
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return (N, N)
        if self.kind == GeometryKind.SPHERE:
            return (N // 2, N)
        return (N,)

    @property
    def spacing(self) -> float:
        """Physical grid spacing (equatorial on the sphere)."""
        return TWO_PI * self.length_scale / self.grid_size

    @property
    def max_bandlimit(self) -> int:
        if self.kind == GeometryKind.SPHERE:
            return self._tables.lmax
        return self.grid_size // 2 - 1

    @property
    def _tables(self) -> SphereTables:
        return _sphere_tables(self.grid_size // 2, self.grid_size)

    def with_radius(self, radius: float) -> "BaseGeometry":
        if not self.is_curved:
            raise DomainError(f"{self.kind.value} cannot be rescaled by radius")
        return replace(self, radius_or_period=float(radius))

    def with_grid_size(self, grid_size: int) -> "BaseGeometry":
        return replace(self, grid_size=int(grid_size))

    # ========== Grid ==========

    def unit_axes(self) -> Tuple[NDArray, ...]:
        """Unit-scale coordinate axes (angles)."""
        N = self.grid_size
        theta = TWO_PI * np.arange(N) / N
        if self.kind == GeometryKind.SPHERE:
            return (self._tables.colat, theta)
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return (theta, theta)
        return (theta,)

    def grid_points(self) -> NDArray:
        """Physical coordinates of every grid point.

        Returns:
            shape (N,) on 1-d bases (angle on the circle, position on the line);
            shape (*self.shape, 2) otherwise (positions on the plane,
            (colatitude, longitude) on the sphere)
        """
        axes = self.unit_axes()
        if self.n == 1:
            return axes[0] if self.is_curved else self.length_scale * axes[0]
        first, second = np.meshgrid(*axes, indexing="ij")
        points = np.stack([first, second], axis=-1)
        if not self.is_curved:
            points = points * self.length_scale
        return points

    def to_unit(self, points: ArrayLike) -> NDArray:
        points = np.asarray(points, dtype=float)
        return points if self.is_curved else points / self.length_scale

    def quadrature_weights(self, scale: Optional[float] = None) -> NDArray:
        """Weights of the grid quadrature for the metric at length scale `scale`."""
        ell = self.length_scale if scale is None else float(scale)
        N = self.grid_size
        if self.kind == GeometryKind.SPHERE:
            tables = self._tables
            return np.repeat((ell ** 2 * tables.weights * TWO_PI / N)[:, None], N, axis=1)
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return np.full(self.shape, (ell * TWO_PI / N) ** 2)
        return np.full(self.shape, ell * TWO_PI / N)

    def integrate(self, values: ArrayLike, scale: Optional[float] = None) -> Union[float, NDArray]:
        """Integrate over the base; leading axes of `values` are kept."""
        values = np.asarray(values)
        axes = tuple(range(-len(self.shape), 0))
        return np.sum(values * self.quadrature_weights(scale), axis=axes)

    def volume(self, scale: Optional[float] = None) -> float:
        return float(np.sum(self.quadrature_weights(scale)))

    # ========== Spectral transforms ==========

    def to_modes(self, values: ArrayLike) -> NDArray:
        """Forward transform over the trailing spatial axes."""
        values = np.asarray(values, dtype=float)
        if self.kind == GeometryKind.SPHERE:
            tables = self._tables
            U = np.fft.rfft(values, axis=-1)[..., : tables.mmax + 1]
            return (TWO_PI / self.grid_size) * np.einsum(
                "...jm,mlj,j->...lm", U, tables.legendre, tables.weights
            )
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return np.fft.rfft2(values, axes=(-2, -1))
        return np.fft.rfft(values, axis=-1)

    def from_modes(self, coeffs: ArrayLike, table: Optional[NDArray] = None) -> NDArray:
        """Inverse of to_modes."""
        coeffs = np.asarray(coeffs)
        N = self.grid_size
        if self.kind == GeometryKind.SPHERE:
            tables = self._tables
            table = tables.legendre if table is None else table
            U = N * np.einsum("...lm,mlj->...jm", coeffs, table)
            full = np.zeros(U.shape[:-1] + (N // 2 + 1,), dtype=complex)
            full[..., : tables.mmax + 1] = U
            return np.fft.irfft(full, n=N, axis=-1)
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return np.fft.irfft2(coeffs, s=(N, N), axes=(-2, -1))
        return np.fft.irfft(coeffs, n=N, axis=-1)

    def _wavenumbers(self) -> Tuple[NDArray, ...]:
        N = self.grid_size
        if self.kind == GeometryKind.SPHERE:
            tables = self._tables
            return (np.arange(tables.lmax + 1)[:, None], np.arange(tables.mmax + 1)[None, :])
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return (np.fft.fftfreq(N, 1.0 / N)[:, None], np.fft.rfftfreq(N, 1.0 / N)[None, :])
        return (np.fft.rfftfreq(N, 1.0 / N),)

    @property
    def unit_eigenvalues(self) -> NDArray:
        """Eigenvalue of the unit-scale Laplacian for each mode coefficient."""
        if self.kind == GeometryKind.SPHERE:
            l, m = self._wavenumbers()
            return np.broadcast_to(-(l * (l + 1.0)), (l.size, m.size)).astype(float)
        if self.kind == GeometryKind.PERIODIC_PLANE:
            kx, ky = self._wavenumbers()
            return -(kx ** 2 + ky ** 2).astype(float)
        (k,) = self._wavenumbers()
        return -(k ** 2).astype(float)

    @property
    def eigenvalues(self) -> NDArray:
        """Eigenvalues of the intrinsic Laplacian, one per mode coefficient."""
        return self.unit_eigenvalues / self.length_scale ** 2

    def mode_degree(self) -> NDArray:
        """Bandlimit degree per mode: |k|, max(|kx|,|ky|) or l."""
        if self.kind == GeometryKind.SPHERE:
            l, m = self._wavenumbers()
            degree = np.broadcast_to(l, (l.size, m.size)).astype(float).copy()
            degree[np.broadcast_to(l < m, degree.shape)] = np.inf
            return degree
        if self.kind == GeometryKind.PERIODIC_PLANE:
            kx, ky = self._wavenumbers()
            return np.maximum(np.abs(kx), np.abs(ky)).astype(float)
        (k,) = self._wavenumbers()
        return k.astype(float)

    def eigenfunction(self, index: Union[int, Tuple[int, int]]) -> NDArray:
        """Real eigenfunction obtained from a single mode coefficient."""
        coeffs = np.zeros(self.unit_eigenvalues.shape, dtype=complex)
        coeffs[index] = 1.0
        values = self.from_modes(coeffs)
        return values / np.max(np.abs(values))

    def random_field(self, rng: np.random.Generator, bandlimit: int, amplitude: float = 1.0) -> NDArray:
        """Random bandlimited field with standard normal mode coefficients."""
        shape = self.unit_eigenvalues.shape
        coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        coeffs[self.mode_degree() > bandlimit] = 0.0
        values = self.from_modes(coeffs)
        peak = np.max(np.abs(values))
        return amplitude * values / peak if peak > 0 else values

    # ========== Derivatives ==========

    def _periodic_derivative(self, values: NDArray, orders: Tuple[int, ...]) -> NDArray:
        N = self.grid_size
        coeffs = self.to_modes(values)
        mult = np.ones(coeffs.shape[-len(orders):], dtype=complex)
        for k, order in zip(self._wavenumbers(), orders):
            factor = (1j * k) ** order
            if order % 2:
                factor = np.where(np.abs(k) == N // 2, 0.0, factor)
            mult = mult * factor
        return self.from_modes(coeffs * mult)

    def _sphere_jets(self, values: NDArray):
        tables = self._tables
        l, m = self._wavenumbers()
        a = self.to_modes(values)
        sin = np.sin(tables.colat)[:, None]
        cot = (np.cos(tables.colat) / np.sin(tables.colat))[:, None]
        u_th = self.from_modes(a, tables.legendre_dtheta)
        u_ph = self.from_modes(a * (1j * m))
        u_phph = self.from_modes(a * -(m ** 2.0))
        u_thph = self.from_modes(a * (1j * m), tables.legendre_dtheta)
        lap = self.from_modes(a * -(l * (l + 1.0)))
        u_thth = lap - cot * u_th - u_phph / sin ** 2
        return sin, cot, u_th, u_ph, u_thth, u_thph, u_phph, lap

    def unit_gradient(self, values: ArrayLike) -> NDArray:
        """Gradient in an orthonormal frame of the unit-scale base, shape (n, ...)."""
        values = np.asarray(values, dtype=float)
        if self.kind == GeometryKind.SPHERE:
            sin, _, u_th, u_ph, *_ = self._sphere_jets(values)
            return np.stack([u_th, u_ph / sin])
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return np.stack([self._periodic_derivative(values, (1, 0)), self._periodic_derivative(values, (0, 1))])
        return self._periodic_derivative(values, (1,))[None]

    def unit_hessian(self, values: ArrayLike) -> NDArray:
        """Covariant Hessian in an orthonormal frame of the unit-scale base, shape (n, n, ...)."""
        values = np.asarray(values, dtype=float)
        if self.kind == GeometryKind.SPHERE:
            sin, cot, u_th, u_ph, u_thth, u_thph, u_phph, _ = self._sphere_jets(values)
            cos = cot * sin
            h12 = (u_thph - cot * u_ph) / sin
            h22 = (u_phph + sin * cos * u_th) / sin ** 2
            return np.stack([np.stack([u_thth, h12]), np.stack([h12, h22])])
        if self.kind == GeometryKind.PERIODIC_PLANE:
            hxx = self._periodic_derivative(values, (2, 0))
            hxy = self._periodic_derivative(values, (1, 1))
            hyy = self._periodic_derivative(values, (0, 2))
            return np.stack([np.stack([hxx, hxy]), np.stack([hxy, hyy])])
        return self._periodic_derivative(values, (2,))[None, None]

    def unit_laplacian(self, values: ArrayLike) -> NDArray:
        values = np.asarray(values, dtype=float)
        return self.from_modes(self.to_modes(values) * self.unit_eigenvalues)

    def gradient(self, values: ArrayLike, scale: Optional[float] = None) -> NDArray:
        ell = self.length_scale if scale is None else scale
        return self.unit_gradient(values) / self._scale(ell)

    def hessian(self, values: ArrayLike, scale: Optional[float] = None) -> NDArray:
        ell = self.length_scale if scale is None else scale
        return self.unit_hessian(values) / self._scale(ell) ** 2

    def laplacian(self, values: ArrayLike, scale: Optional[float] = None) -> NDArray:
        ell = self.length_scale if scale is None else scale
        return self.unit_laplacian(values) / self._scale(ell) ** 2

    def derivative_norm(self, values: ArrayLike, order: int, scale: Optional[float] = None) -> NDArray:
        """Pointwise |nabla^order f| in the intrinsic metric at length scale `scale`.

        Raises:
            UnsupportedOrderError: third derivatives on the sphere, or order > 3
        """
        values = np.asarray(values, dtype=float)
        ell = self._scale(self.length_scale if scale is None else scale)
        if order == 0:
            return np.abs(values)
        if order == 1:
            return np.sqrt(np.sum(self.unit_gradient(values) ** 2, axis=0)) / ell
        if order == 2:
            return np.sqrt(np.sum(self.unit_hessian(values) ** 2, axis=(0, 1))) / ell ** 2
        if order == 3 and self.kind != GeometryKind.SPHERE:
            if self.n == 1:
                return np.abs(self._periodic_derivative(values, (3,))) / ell ** 3
            parts = [self._periodic_derivative(values, (3 - j, j)) for j in range(4)]
            total = parts[0] ** 2 + 3 * parts[1] ** 2 + 3 * parts[2] ** 2 + parts[3] ** 2
            return np.sqrt(total) / ell ** 3
        raise UnsupportedOrderError(f"derivative order {order} is not available on {self.kind.value}")

    def _scale(self, scale) -> NDArray:
        """Per-time length scales broadcast against (time, space...) arrays."""
        scale = np.asarray(scale, dtype=float)
        if scale.ndim == 1:
            scale = scale.reshape((-1,) + (1,) * len(self.shape))
        return scale

    # ========== Distances ==========

    def unit_separation(self, x: ArrayLike, y: ArrayLike) -> NDArray:
        """Unit-scale separation of physical points.

        Returns:
            wrapped signed angle difference in (-pi, pi] on 1-d bases, the pair of
            wrapped differences (last axis) on the plane, the great-circle angle on
            the sphere
        """
        x = self.to_unit(x)
        y = self.to_unit(y)
        if self.kind == GeometryKind.SPHERE:
            vx, vy = _unit_vector(x), _unit_vector(y)
            cross = np.linalg.norm(np.cross(vx, vy), axis=-1)
            return np.arctan2(cross, np.sum(vx * vy, axis=-1))
        return _wrap(x - y)

    def unit_distance(self, x: ArrayLike, y: ArrayLike) -> NDArray:
        sep = self.unit_separation(x, y)
        if self.kind == GeometryKind.PERIODIC_PLANE:
            return np.sqrt(np.sum(sep ** 2, axis=-1))
        return np.abs(sep)


def _wrap(delta: NDArray) -> NDArray:
    wrapped = np.mod(delta + np.pi, TWO_PI) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def _unit_vector(points: NDArray) -> NDArray:
    colat, lon = points[..., 0], points[..., 1]
    return np.stack([np.sin(colat) * np.cos(lon), np.sin(colat) * np.sin(lon), np.cos(colat)], axis=-1)


# ========== Constructors and metric operations ==========

def make_base(kind: Union[GeometryKind, str], n: Optional[int], radius_or_period: float, grid_size: int) -> BaseGeometry:
    """
    Build a base geometry.

    Args:
        kind: circle, periodic_line, periodic_plane or sphere
        n: dimension; None derives it from kind
        radius_or_period: radius or period
        grid_size: points per period (even, >= 16)

    Returns:
        BaseGeometry

    Raises:
        DomainError: inconsistent dimension, odd or small grid, nonpositive length
    """
    try:
        kind = GeometryKind(kind)
    except ValueError as e:
        raise DomainError(f"unknown geometry kind {kind!r}") from e
    n = _DIMENSION[kind] if n is None else int(n)
    geom = BaseGeometry(kind, n, float(radius_or_period), int(grid_size))
    logger.debug(f"Made {kind.value} base: scale={geom.length_scale:.6g} N={grid_size} |A|^2={geom.A2:.6g}")
    return geom


def geodesic_distance(geom: BaseGeometry, x: ArrayLike, y: ArrayLike) -> NDArray:
    """Intrinsic distance between physical points of the base."""
    return geom.length_scale * geom.unit_distance(x, y)


def ball_volume(geom: BaseGeometry, x: ArrayLike, r: float) -> float:
    """
    Volume of the geodesic ball B_r(x); every model base is homogeneous so x only
    selects the center.

    Raises:
        DomainError: r outside (0, injectivity radius)
    """
    if not 0 < r < geom.injectivity_radius:
        raise DomainError(f"ball radius {r} outside (0, {geom.injectivity_radius:.6g})")
    if geom.kind == GeometryKind.SPHERE:
        R = geom.radius
        return float(TWO_PI * R ** 2 * (1.0 - np.cos(r / R)))
    return float(UNIT_BALL_VOLUME[geom.n] * r ** geom.n)


def check_ball_volume_bounds(geom: BaseGeometry, radii: Optional[ArrayLike] = None) -> Tuple[bool, float, float]:
    """
    Check (1/2) w_n r^n <= Vol(B_r) <= 2 w_n r^n below half the injectivity radius.

    Returns:
        (passed, smallest ratio, largest ratio) of Vol(B_r) / (w_n r^n)
    """
    i0 = geom.injectivity_radius / 2.0
    radii = np.linspace(i0 / 64.0, i0, 64) if radii is None else np.asarray(radii, dtype=float)
    center = geom.grid_points()[(0,) * len(geom.shape)]
    ratios = np.array([ball_volume(geom, center, r) / (UNIT_BALL_VOLUME[geom.n] * r ** geom.n) for r in radii])
    lo, hi = float(ratios.min()), float(ratios.max())
    return (0.5 <= lo and hi <= 2.0), lo, hi


@dataclass(frozen=True)
class EvolvingGeometry:
    """A round base shrinking under mean curvature flow, R(t) = sqrt(R0^2 - 2nt).

    Attributes:
        base: circle or sphere at the initial radius R0
        horizon: time horizon T, below extinction
    """

    base: BaseGeometry
    horizon: float

    def __post_init__(self):
        if not self.base.is_curved:
            raise DomainError(f"{self.base.kind.value} does not shrink under the flow")
        if not 0 < self.horizon < self.extinction_time:
            raise DomainError(
                f"horizon {self.horizon} must lie in (0, {self.extinction_time:.6g}) before extinction"
            )

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def R0(self) -> float:
        return self.base.radius

    @property
    def extinction_time(self) -> float:
        return self.R0 ** 2 / (2.0 * self.n)

    def _check_times(self, t: ArrayLike) -> NDArray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.extinction_time):
            raise DomainError(f"time outside [0, {self.extinction_time:.6g}) of the shrinking {self.base.kind.value}")
        return t

    def radius(self, t: ArrayLike) -> Union[float, NDArray]:
        t = self._check_times(t)
        value = np.sqrt(self.R0 ** 2 - 2.0 * self.n * t)
        return float(value) if value.ndim == 0 else value

    def conformal_time(self, t: ArrayLike) -> Union[float, NDArray]:
        """tau(t) = integral of R(s)^-2 over [0, t]."""
        t = self._check_times(t)
        value = -np.log1p(-2.0 * self.n * t / self.R0 ** 2) / (2.0 * self.n)
        return float(value) if value.ndim == 0 else value

    def geometry_at(self, t: float) -> BaseGeometry:
        return self.base.with_radius(self.radius(t))

    def metric_equivalence_constant(self, T: Optional[float] = None) -> float:
        """C0 with (1/C0) g_t <= g_0 <= C0 g_t on [0, T]."""
        T = self.horizon if T is None else T
        return self.R0 ** 2 / self.radius(T) ** 2


def make_evolving(base: BaseGeometry, horizon: float) -> EvolvingGeometry:
    return EvolvingGeometry(base, float(horizon))


def shrink_radius(evolving: EvolvingGeometry, t: ArrayLike) -> Union[float, NDArray]:
    return evolving.radius(t)


def conformal_time(evolving: EvolvingGeometry, t: ArrayLike) -> Union[float, NDArray]:
    return evolving.conformal_time(t)
