"""
Heat kernels of the model bases and numerical certificates for their Gaussian bounds.

Four operators are covered: G for d/dt - Laplacian and K for d/dt - Laplacian - |A|^2
on a static base, and their counterparts over the shrinking round family. On every
model base |A|^2 is constant, so each kernel factors as

    kernel(x, t; y, s) = exp(rate * sigma) * scale(s)^-n * profile(sep(x, y), sigma)

where profile is the heat kernel of the unit-scale base, sigma the elapsed unit
time ((t - s)/R^2 on a static base, conformal time tau(t) - tau(s) on the shrinking
one), rate = n for K and 0 for G. Evolving kernels are densities with respect to
the measure of the base at the source time s.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field

from mcflow.geometry import BaseGeometry, EvolvingGeometry, GeometryKind
from mcflow.shared.errors import DomainError, TruncationError, UnsupportedOrderError

logger = logging.getLogger(__name__)

SERIES_TOLERANCE = 1e-12
DEFAULT_SWITCH = 0.1
NOISE_FLOOR = 1e-13


class KernelTag(str, Enum):
    G = "G"
    K = "K"
    G_EVOLVING = "G_evolving"
    K_EVOLVING = "K_evolving"

    @property
    def evolving(self) -> bool:
        return self in (KernelTag.G_EVOLVING, KernelTag.K_EVOLVING)

    @property
    def has_potential(self) -> bool:
        return self in (KernelTag.K, KernelTag.K_EVOLVING)


class ProfileJet(NamedTuple):
    """Log-magnitudes and signs of (value, first, second, unit-time derivative)."""
    logs: NDArray  # shape (4, ...)
    signs: NDArray
    reliable: NDArray  # bool mask, False where the series is below its noise floor

    def values(self) -> NDArray:
        with np.errstate(under="ignore"):
            return self.signs * np.exp(self.logs)


def _log_abs(values: NDArray) -> Tuple[NDArray, NDArray]:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values)), np.sign(values)


def _signed_logaddexp(la, sa, lb, sb) -> Tuple[NDArray, NDArray]:
    hi = np.maximum(la, lb)
    finite = np.isfinite(hi)
    safe_hi = np.where(finite, hi, 0.0)
    with np.errstate(under="ignore", invalid="ignore"):
        total = sa * np.exp(la - safe_hi) + sb * np.exp(lb - safe_hi)
    log_total, sign = _log_abs(total)
    return np.where(finite, safe_hi + log_total, -np.inf), np.where(finite, sign, 0.0)


# ========== Unit-scale profiles ==========

class BaseProfile(ABC):
    """Heat kernel of a unit-scale base as a function of separation and unit time"""

    def __init__(self, max_modes: int, tolerance: float = SERIES_TOLERANCE):
        """
        Args:
            max_modes: Largest number of series terms allowed
            tolerance: Bound on the first omitted series term
        """
        self.max_modes = max_modes
        self.tolerance = tolerance

    @abstractmethod
    def terms(self, ks: NDArray, sigma: float) -> NDArray:
        """Size of series term k at unit time sigma, including derivative weights."""

    @abstractmethod
    def log_jet(self, sep: NDArray, sigma: float) -> ProfileJet:
        """Value and derivatives at separations `sep` and unit time sigma."""

    def modes_needed(self, sigma: float) -> int:
        """
        Number of series terms whose first omitted term is below tolerance.

        Raises:
            TruncationError: more than max_modes terms would be needed
        """
        ks = np.arange(1, self.max_modes + 2)
        below = np.flatnonzero(self.terms(ks, sigma) < self.tolerance)
        if below.size == 0:
            raise TruncationError(
                f"series at unit time {sigma:.3g} needs more than {self.max_modes} modes; "
                f"raise the small-time switch threshold or max_modes"
            )
        return int(ks[below[0]] - 1)


class PeriodicProfile(BaseProfile):
    """Unit circle kernel: Fourier series, or the image sum below the switch time"""

    def __init__(self, max_modes: int = 64, switch_threshold: float = DEFAULT_SWITCH, tolerance: float = SERIES_TOLERANCE):
        super().__init__(max_modes, tolerance)
        self.switch_threshold = switch_threshold

    def terms(self, ks: NDArray, sigma: float) -> NDArray:
        return ks ** 2 * np.exp(-(ks ** 2) * sigma) / np.pi

    def series(self, delta: NDArray, sigma: float) -> NDArray:
        """(f, f', f'') from the Fourier series; f_sigma = f''."""
        k = np.arange(1, self.modes_needed(sigma) + 1)
        decay = np.exp(-(k ** 2) * sigma)
        phase = np.asarray(delta, dtype=float)[..., None] * k
        f = (1.0 + 2.0 * np.sum(decay * np.cos(phase), axis=-1)) / (2.0 * np.pi)
        f1 = -np.sum(k * decay * np.sin(phase), axis=-1) / np.pi
        f2 = -np.sum(k ** 2 * decay * np.cos(phase), axis=-1) / np.pi
        return np.stack([f, f1, f2, f2])

    def images(self, delta: NDArray, sigma: float) -> Tuple[NDArray, NDArray]:
        """Log-magnitudes and signs of (f, f', f'', f_sigma) from the wrapped Gaussian."""
        delta = np.asarray(delta, dtype=float)
        M = int(np.ceil(np.sqrt(160.0 * sigma) / (2.0 * np.pi))) + 1
        m = np.arange(-M, M + 1)
        shifted = delta[..., None] + 2.0 * np.pi * m
        with np.errstate(under="ignore"):
            weight = np.exp(-(shifted ** 2 - delta[..., None] ** 2) / (4.0 * sigma))
        S0 = np.sum(weight, axis=-1)
        S1 = np.sum(-shifted / (2.0 * sigma) * weight, axis=-1)
        S2 = np.sum((shifted ** 2 / (4.0 * sigma ** 2) - 1.0 / (2.0 * sigma)) * weight, axis=-1)
        sums = np.stack([S0, S1, S2, S2])
        logs, signs = _log_abs(sums)
        base = -0.5 * np.log(4.0 * np.pi * sigma) - delta ** 2 / (4.0 * sigma)
        return logs + base, signs

    def log_jet(self, sep: NDArray, sigma: float) -> ProfileJet:
        sep = np.asarray(sep, dtype=float)
        if sigma < self.switch_threshold:
            logs, signs = self.images(sep, sigma)
        else:
            logs, signs = _log_abs(self.series(sep, sigma))
        return ProfileJet(logs, signs, np.ones(sep.shape, dtype=bool))


class LegendreProfile(BaseProfile):
    """Unit 2-sphere kernel as a Legendre series in the great-circle angle"""

    def __init__(self, max_modes: int = 2048, tolerance: float = SERIES_TOLERANCE):
        super().__init__(max_modes, tolerance)

    def terms(self, ks: NDArray, sigma: float) -> NDArray:
        eig = ks * (ks + 1.0)
        return (2 * ks + 1) / (4.0 * np.pi) * eig ** 2 * np.exp(-eig * sigma)

    def log_jet(self, sep: NDArray, sigma: float) -> ProfileJet:
        """
        Returns the value, |first derivative|, Hessian norm and unit-time derivative.

        P_l, P_l' and P_l'' come from the three-term recurrence and
        P'_{l+1} = P'_{l-1} + (2l+1) P_l.
        """
        gamma = np.asarray(sep, dtype=float)
        x = np.cos(gamma)
        sin = np.sin(gamma)
        L = self.modes_needed(sigma)

        def coefficient(l):
            return (2 * l + 1) / (4.0 * np.pi) * np.exp(-l * (l + 1.0) * sigma)

        P_prev, P = np.ones_like(x), x.copy()
        dP_prev, dP = np.zeros_like(x), np.ones_like(x)
        d2P_prev, d2P = np.zeros_like(x), np.zeros_like(x)
        c0, c1 = coefficient(0), coefficient(1)
        f = c0 * P_prev + c1 * P
        A1 = c1 * dP
        A2 = c1 * d2P
        ft = -2.0 * c1 * P
        for l in range(1, L):
            P_next = ((2 * l + 1) * x * P - l * P_prev) / (l + 1)
            dP_next = dP_prev + (2 * l + 1) * P
            d2P_next = d2P_prev + (2 * l + 1) * dP
            P_prev, P = P, P_next
            dP_prev, dP = dP, dP_next
            d2P_prev, d2P = d2P, d2P_next
            c = coefficient(l + 1)
            f = f + c * P
            A1 = A1 + c * dP
            A2 = A2 + c * d2P
            ft = ft - c * (l + 1) * (l + 2) * P

        f_gamma = -sin * A1
        f_gg = sin ** 2 * A2 - x * A1
        hess = np.sqrt(f_gg ** 2 + (x * A1) ** 2)
        logs, signs = _log_abs(np.stack([f, np.abs(f_gamma), hess, ft]))
        peak = np.sum([coefficient(l) for l in range(L + 1)])
        reliable = np.abs(f) >= NOISE_FLOOR * peak
        return ProfileJet(logs, signs, reliable)


# ========== Kernel evaluator ==========

@dataclass(frozen=True)
class KernelEvaluator:
    """Exact series evaluator for one of G, K, G_evolving, K_evolving.

    Attributes:
        tag: which operator
        geom: the base (the initial base for evolving kernels)
        evolving: the shrinking family, required for evolving tags
        max_modes: series truncation cap (64 on periodic bases, 2048 on the sphere)
        switch_threshold: unit time below which periodic kernels use the image sum
    """

    tag: KernelTag
    geom: BaseGeometry
    evolving: Optional[EvolvingGeometry] = None
    max_modes: Optional[int] = None
    switch_threshold: float = DEFAULT_SWITCH
    profile: BaseProfile = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.tag.evolving and self.evolving is None:
            raise DomainError(f"{self.tag.value} needs an evolving geometry")
        if not self.tag.evolving and self.evolving is not None:
            raise DomainError(f"{self.tag.value} is a static-base kernel")
        if self.geom.kind == GeometryKind.SPHERE:
            profile = LegendreProfile(self.max_modes or 2048)
        else:
            profile = PeriodicProfile(self.max_modes or 64, self.switch_threshold)
        object.__setattr__(self, "profile", profile)

    @property
    def rate(self) -> float:
        """|A|^2 in unit time; zero for G and on flat bases."""
        return self.geom.potential_rate if self.tag.has_potential else 0.0

    @property
    def n(self) -> int:
        return self.geom.n

    # ========== Clock and scales ==========

    def clock(self, t: ArrayLike) -> NDArray:
        t = np.asarray(t, dtype=float)
        if self.evolving is not None:
            return np.asarray(self.evolving.conformal_time(t))
        return t / self.geom.length_scale ** 2

    def clock_gap(self, t: float, s: ArrayLike) -> NDArray:
        s = np.asarray(s, dtype=float)
        if np.any(s >= t) or np.any(s < 0):
            raise DomainError(f"kernel needs 0 <= s < t, got t={t} and s in [{np.min(s)}, {np.max(s)}]")
        return self.clock(t) - self.clock(s)

    def scale_at(self, t: ArrayLike) -> NDArray:
        if self.evolving is not None:
            return np.asarray(self.evolving.radius(t))
        return np.full(np.shape(t), self.geom.length_scale)

    def mode_multipliers(self, t: float, s: ArrayLike) -> NDArray:
        """exp(mu (clock(t) - clock(s))) per mode; leading axes follow s."""
        s = np.asarray(s, dtype=float)
        gap = self.clock(t) - self.clock(s)
        mu = self.geom.unit_eigenvalues + self.rate
        return np.exp(np.multiply.outer(gap, mu))

    def mass_factor(self, t: float, s: ArrayLike) -> NDArray:
        """Total mass exp(|A|^2 elapsed time) of the kernel."""
        return np.exp(self.rate * self.clock_gap(t, s))

    # ========== Evaluation ==========

    def unit_jet(self, sep: NDArray, sigma: float) -> ProfileJet:
        """Profile jet at unit-scale separations; the plane combines two periodic factors."""
        if self.geom.kind != GeometryKind.PERIODIC_PLANE:
            return self.profile.log_jet(sep, sigma)

        jx = self.profile.log_jet(sep[..., 0], sigma)
        jy = self.profile.log_jet(sep[..., 1], sigma)
        lx, ly = jx.logs, jy.logs
        l0 = lx[0] + ly[0]
        l1 = 0.5 * np.logaddexp(2 * (lx[1] + ly[0]), 2 * (lx[0] + ly[1]))
        l2 = 0.5 * np.logaddexp(
            np.logaddexp(2 * (lx[2] + ly[0]), 2 * (lx[0] + ly[2])), np.log(2.0) + 2 * (lx[1] + ly[1])
        )
        lt, st = _signed_logaddexp(lx[3] + ly[0], jx.signs[3] * jy.signs[0], lx[0] + ly[3], jx.signs[0] * jy.signs[3])
        logs = np.stack([l0, l1, l2, lt])
        signs = np.stack([jx.signs[0] * jy.signs[0], np.ones_like(l0), np.ones_like(l0), st])
        return ProfileJet(logs, signs, jx.reliable & jy.reliable)

    def log_magnitude(self, sep: NDArray, t: float, s: float, order: int = 0, time_order: int = 0) -> Tuple[NDArray, NDArray, NDArray]:
        """
        log|d_t^time_order grad^order kernel| at unit separations.

        Returns:
            (log magnitude, sign, reliable mask)

        Raises:
            UnsupportedOrderError: second derivatives of K, or mixed time and space orders
        """
        if order == 2 and self.tag.has_potential:
            raise UnsupportedOrderError(f"second spatial derivatives of {self.tag.value} are not available")
        if order not in (0, 1, 2) or time_order not in (0, 1) or (time_order and order):
            raise UnsupportedOrderError(f"derivative orders (space={order}, time={time_order}) are not available")

        sigma = float(self.clock_gap(t, s))
        jet = self.unit_jet(sep, sigma)
        ell_s, ell_t = float(self.scale_at(s)), float(self.scale_at(t))
        prefactor = self.rate * sigma - self.n * np.log(ell_s)
        if time_order:
            if self.rate:
                logs, signs = _signed_logaddexp(
                    np.log(self.rate) + jet.logs[0], jet.signs[0], jet.logs[3], jet.signs[3]
                )
            else:
                logs, signs = jet.logs[3], jet.signs[3]
            return prefactor - 2.0 * np.log(ell_t) + logs, signs, jet.reliable
        return prefactor - order * np.log(ell_t) + jet.logs[order], jet.signs[order], jet.reliable

    def evaluate(self, x: ArrayLike, t: float, y: ArrayLike, s: float, order: int = 0, time_order: int = 0) -> NDArray:
        sep = self.geom.unit_separation(x, y)
        logs, signs, _ = self.log_magnitude(sep, t, s, order, time_order)
        with np.errstate(under="ignore"):
            return signs * np.exp(logs)


def make_kernel(
    tag: Union[KernelTag, str],
    geometry: Union[BaseGeometry, EvolvingGeometry],
    max_modes: Optional[int] = None,
    switch_threshold: float = DEFAULT_SWITCH,
) -> KernelEvaluator:
    """
    Build a kernel evaluator for a static or evolving base.

    Args:
        tag: G, K, G_evolving or K_evolving
        geometry: BaseGeometry for static tags, EvolvingGeometry for evolving ones
        max_modes: series cap
        switch_threshold: unit time below which the image sum is used
    """
    tag = KernelTag(tag)
    if isinstance(geometry, EvolvingGeometry):
        return KernelEvaluator(tag, geometry.base, geometry, max_modes, switch_threshold)
    return KernelEvaluator(tag, geometry, None, max_modes, switch_threshold)


# ========== Kernel operations ==========

def eval_kernel(ev: KernelEvaluator, x: ArrayLike, t: float, y: ArrayLike, s: float) -> NDArray:
    return ev.evaluate(x, t, y, s)


def kernel_derivative(ev: KernelEvaluator, order: int, x: ArrayLike, t: float, y: ArrayLike, s: float) -> NDArray:
    """
    Spatial derivative in x of the kernel.

    Returns:
        the signed derivative along the circle or line; the tensor norm on the
        plane and the sphere

    Raises:
        UnsupportedOrderError: order outside {1, 2}, or order 2 for K
    """
    if order not in (1, 2):
        raise UnsupportedOrderError(f"kernel_derivative supports orders 1 and 2, got {order}")
    return ev.evaluate(x, t, y, s, order=order)


def kernel_time_derivative(ev: KernelEvaluator, x: ArrayLike, t: float, y: ArrayLike, s: float) -> NDArray:
    return ev.evaluate(x, t, y, s, time_order=1)


def kernel_mass(ev: KernelEvaluator, x: ArrayLike, t: float, s: float) -> float:
    """Integral of the kernel over the base at time s, by grid quadrature."""
    values = ev.evaluate(x, t, ev.geom.grid_points(), s)
    return float(ev.geom.integrate(values, float(ev.scale_at(s))))


def pde_residual(ev: KernelEvaluator, t: float, s: float) -> float:
    """
    Relative sup of (d/dt - Laplacian - potential) applied to the kernel in x,
    with the Laplacian taken spectrally on the grid and d/dt from the series.
    """
    points = ev.geom.grid_points()
    y = points[(0,) * len(ev.geom.shape)]
    ell_t = float(ev.scale_at(t))
    values = ev.evaluate(points, t, y, s)
    dt = ev.evaluate(points, t, y, s, time_order=1)
    residual = dt - ev.geom.laplacian(values, ell_t) - ev.rate / ell_t ** 2 * values
    return float(np.max(np.abs(residual)) / np.max(np.abs(dt)))


def semigroup_residual(ev: KernelEvaluator, t: float, r: float, s: float) -> float:
    """Relative sup of the composition of the kernel over (s, r) and (r, t) minus the kernel over (s, t)."""
    points = ev.geom.grid_points()
    x = points[(0,) * len(ev.geom.shape)]
    flat = points.reshape((-1,) + points.shape[len(ev.geom.shape):])
    weights = ev.geom.quadrature_weights(float(ev.scale_at(r))).reshape(-1)
    first = ev.evaluate(x, t, flat, r)
    second = ev.evaluate(flat[:, None], r, flat[None, :], s)
    composed = (first * weights) @ second
    direct = ev.evaluate(x, t, flat, s)
    return float(np.max(np.abs(composed - direct)) / np.max(np.abs(direct)))


def initial_condition_error(ev: KernelEvaluator, values: ArrayLike, s: float, t: float) -> float:
    """sup |integral of kernel(x, t; y, s) phi(y) dy - phi(x)| over grid x."""
    points = ev.geom.grid_points()
    flat = points.reshape((-1,) + points.shape[len(ev.geom.shape):])
    phi = np.asarray(values, dtype=float).reshape(-1)
    weights = ev.geom.quadrature_weights(float(ev.scale_at(s))).reshape(-1)
    matrix = ev.evaluate(flat[:, None], t, flat[None, :], s)
    return float(np.max(np.abs(matrix @ (weights * phi) - phi)))


def representation_gap(ev: KernelEvaluator, sigmas: ArrayLike, separations: Optional[ArrayLike] = None) -> float:
    """Largest difference between the Fourier series and the image sum on periodic bases."""
    if not isinstance(ev.profile, PeriodicProfile):
        raise DomainError("the image-sum representation exists only on periodic bases")
    sep = np.linspace(0.0, np.pi, 65) if separations is None else np.asarray(separations, dtype=float)
    gap = 0.0
    for sigma in np.asarray(sigmas, dtype=float):
        logs, signs = ev.profile.images(sep, float(sigma))
        images = signs * np.exp(logs)
        series = ev.profile.series(sep, float(sigma))
        gap = max(gap, float(np.max(np.abs(images[:3] - series[:3]))))
    return gap


# ========== Gaussian bound certificates ==========

class BoundSampleSpec(BaseModel):
    """Sampling of (t - s, distance) for a Gaussian bound certificate"""
    model_config = ConfigDict(extra="forbid")

    t_min: float = Field(1.0e-3, gt=0)
    t_max: float = Field(0.25, gt=0)
    time_samples: int = Field(17, ge=2)
    distance_samples: int = Field(65, ge=2)
    refinement_levels: int = Field(2, ge=1)
    refinement_factor: float = Field(4.0, gt=1)
    growth_tolerance: float = Field(0.02, ge=0)
    scale_ladder_max: float = Field(12.0, gt=0, description="Largest d/sqrt(t - s) sampled")
    scale_ladder_step: float = Field(0.1, gt=0)
    source_times: List[float] = Field(default_factory=lambda: [0.0], description="Source times s for evolving kernels")
    off_diagonal_samples: int = Field(8, ge=1)


class GaussianBoundCertificate(BaseModel):
    """Fitted constant of a Gaussian upper bound for a kernel derivative"""
    model_config = ConfigDict(populate_by_name=True)

    operator: str
    order: int
    time_order: int = 0
    C: float
    D: float
    margin: float
    samples: int
    passed: bool = Field(..., serialization_alias="pass")
    off_diagonal_C: float
    off_diagonal_bound: float
    refined_ratio: float
    t_min: float
    t_max: float
    refined_t_min: float
    skipped_samples: int = 0
    positive: Optional[bool] = None

    @property
    def name(self) -> str:
        suffix = f",time_order={self.time_order}" if self.time_order else ""
        return f"gaussian_bound[{self.operator},order={self.order}{suffix}]"


def off_diagonal_slack(power: float, D: float) -> float:
    """
    Largest factor by which weighting with t - origin instead of t - s can raise
    a Gaussian-bounded ratio on the off-diagonal samples: sup over x >= 1 of
    x^power exp(-(x - 1) / (4D)) where d^2 >= t - origin, and 2^power where
    t - s >= (t - origin) / 2.
    """
    peak = 4.0 * D * power
    far = peak ** power * np.exp(-(peak - 1.0) / (4.0 * D)) if peak > 1.0 else 1.0
    return float(max(far, 2.0 ** power))


def _separation_samples(ev: KernelEvaluator, gap: float, t: float, spec: BoundSampleSpec) -> NDArray:
    ladder = np.arange(0.0, spec.scale_ladder_max + 0.5 * spec.scale_ladder_step, spec.scale_ladder_step)
    adaptive = ladder * np.sqrt(gap) / float(ev.scale_at(t))
    unit = np.union1d(np.linspace(0.0, np.pi, spec.distance_samples), adaptive[adaptive <= np.pi])
    if ev.geom.kind == GeometryKind.PERIODIC_PLANE:
        return np.stack([unit, np.zeros_like(unit)], axis=-1)
    return unit


def _log_ratios(ev: KernelEvaluator, s: float, t: float, weight_time: float, order: int, time_order: int, D: float, spec: BoundSampleSpec):
    gap = t - s
    sep = _separation_samples(ev, gap, t, spec)
    logs, signs, reliable = ev.log_magnitude(sep, t, s, order, time_order)
    unit = np.abs(sep[..., 0]) if sep.ndim > 1 else np.abs(sep)
    d = float(ev.scale_at(t)) * unit
    power = (ev.n + order) / 2.0 + time_order
    ratios = logs + d ** 2 / (4.0 * D * weight_time) + power * np.log(weight_time)
    return ratios, signs, reliable, d, gap


def certify_gaussian_bound(
    ev: KernelEvaluator,
    order: int,
    D: float,
    sample_spec: Optional[BoundSampleSpec] = None,
    time_order: int = 0,
) -> GaussianBoundCertificate:
    """
    Fit C in |d_t^j grad^k kernel| (t-s)^{(n+k)/2 + j} exp(d^2 / (4D(t-s))) <= C
    over (t - s) in [t_min, t_max] and check it still holds on finer gaps.

    The certificate passes when the bound with slack growth_tolerance survives
    refinement down to t_min / refinement_factor^levels, the off-diagonal
    constant stays within off_diagonal_slack of the fitted one, and, at order 0,
    the kernel is positive on every sample.

    Args:
        ev: kernel evaluator
        order: spatial derivative order (0, 1, 2)
        D: Gaussian width constant
        sample_spec: sampling; defaults to BoundSampleSpec()
        time_order: 1 to bound the time derivative instead

    Returns:
        GaussianBoundCertificate

    Raises:
        TruncationError: the series cannot reach the smallest gap
        UnsupportedOrderError: order 2 for K
        DomainError: evolving samples reach past the horizon
    """
    spec = sample_spec or BoundSampleSpec()
    if spec.t_min >= spec.t_max:
        raise DomainError("t_min must be below t_max")
    sources = spec.source_times if ev.evolving is not None else [0.0]
    if ev.evolving is not None and max(sources) + spec.t_max > ev.evolving.horizon:
        raise DomainError(f"evolving samples reach past the horizon {ev.evolving.horizon}")

    base_gaps = np.geomspace(spec.t_min, spec.t_max, spec.time_samples)
    refined_gaps = np.concatenate([
        np.geomspace(spec.t_min / spec.refinement_factor ** level, spec.t_min / spec.refinement_factor ** (level - 1), 4, endpoint=False)
        for level in range(1, spec.refinement_levels + 1)
    ])

    def sweep(gaps):
        best, count, skipped, positive = -np.inf, 0, 0, True
        for s in sources:
            for gap in gaps:
                ratios, signs, reliable, _, _ = _log_ratios(ev, s, s + gap, gap, order, time_order, D, spec)
                skipped += int(np.sum(~reliable))
                count += int(np.sum(reliable))
                if np.any(reliable):
                    best = max(best, float(np.max(ratios[reliable])))
                    if order == 0 and time_order == 0:
                        positive = positive and bool(np.all(signs[reliable] > 0))
        return best, count, skipped, positive

    log_C, n_base, skipped_base, positive_base = sweep(base_gaps)
    log_refined, n_refined, skipped_refined, positive_refined = sweep(refined_gaps)
    C = float(np.exp(log_C))
    refined_ratio = float(np.exp(log_refined))
    margin = C * (1.0 + spec.growth_tolerance) - max(C, refined_ratio)

    off_diagonal = -np.inf
    origin = sources[0]
    for gap in base_gaps:
        t = origin + gap
        for s in np.linspace(origin, t, spec.off_diagonal_samples + 1)[:-1]:
            ratios, _, reliable, d, _ = _log_ratios(ev, s, t, gap, order, time_order, D, spec)
            outside = reliable & ((d >= np.sqrt(gap)) | (s - origin <= gap / 2.0))
            if np.any(outside):
                off_diagonal = max(off_diagonal, float(np.max(ratios[outside])))

    off_diagonal_C = float(np.exp(off_diagonal))
    power = (ev.n + order) / 2.0 + time_order
    off_diagonal_bound = off_diagonal_slack(power, D) * max(C, refined_ratio) * (1.0 + spec.growth_tolerance)
    off_diagonal_passed = bool(np.isfinite(off_diagonal_C) and off_diagonal_C <= off_diagonal_bound)

    positive = (positive_base and positive_refined) if order == 0 and time_order == 0 else None
    passed = bool(np.isfinite(C) and margin >= 0 and off_diagonal_passed and positive is not False)

    cert = GaussianBoundCertificate(
        operator=ev.tag.value,
        order=order,
        time_order=time_order,
        C=C,
        D=D,
        margin=float(margin),
        samples=n_base + n_refined,
        passed=passed,
        off_diagonal_C=off_diagonal_C,
        off_diagonal_bound=float(off_diagonal_bound),
        refined_ratio=refined_ratio,
        t_min=spec.t_min,
        t_max=spec.t_max,
        refined_t_min=float(refined_gaps.min()),
        skipped_samples=skipped_base + skipped_refined,
        positive=positive,
    )
    if passed:
        logger.info(f"{cert.name} D={D}: C={C:.6g} margin={margin:.3g}")
    else:
        logger.warning(
            f"{cert.name} D={D} failed: C={C:.6g} refined ratio {refined_ratio:.6g} "
            f"off-diagonal {off_diagonal_C:.6g} of {off_diagonal_bound:.6g}"
        )
    return cert
