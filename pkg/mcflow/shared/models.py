"""
Pydantic models for experiment configuration and experiment summaries.
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

GeometryKindName = Literal["circle", "periodic_line", "periodic_plane", "sphere"]
KernelTagName = Literal["G", "K", "G_evolving", "K_evolving"]
ExperimentName = Literal[
    "existence",
    "perturbation",
    "kernel-bounds",
    "contraction",
    "norms",
    "oracle-compare",
    "plot",
]

_DIMENSION = {"circle": 1, "periodic_line": 1, "periodic_plane": 2, "sphere": 2}


class GeometrySpec(BaseModel):
    """Base manifold and its sampling grid"""
    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {"kind": "circle", "n": 1, "radius_or_period": 1.0, "grid_size": 128}
        },
    )

    kind: GeometryKindName
    n: Optional[int] = Field(None, description="Dimension; derived from kind when omitted")
    radius_or_period: float = Field(..., gt=0, description="Radius (circle, sphere) or period (flat)")
    grid_size: int = Field(..., description="Points per period; the sphere uses grid_size/2 latitudes")

    @field_validator("grid_size")
    @classmethod
    def grid_size_even(cls, value: int) -> int:
        if value < 16 or value % 2:
            raise ValueError("grid size must be even and >= 16")
        return value

    @model_validator(mode="after")
    def dimension_matches_kind(self) -> "GeometrySpec":
        expected = _DIMENSION[self.kind]
        if self.n is None:
            self.n = expected
        elif self.n != expected:
            raise ValueError(f"{self.kind} has dimension {expected}, got n={self.n}")
        return self


class ResolutionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    time_nodes: int = Field(64, ge=4, description="Number of time steps J")
    fd_steps: int = Field(512, ge=1, description="Oracle time steps")


class ToleranceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    picard: float = Field(1.0e-9, gt=0)
    max_error: float = Field(1.0e-3, gt=0)
    contraction: float = Field(0.5, gt=0)
    stability: float = Field(0.1, gt=0)
    quadratic_ratio: float = Field(0.05, gt=0)


class PicardSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    delta: float = Field(0.25, gt=0, description="Radius of the ball the fixed point is sought in")
    max_iterations: int = Field(60, ge=1)
    probes: int = Field(6, ge=1, description="Probe fields per fitted constant")
    compare_oracle: bool = True
    uniqueness_restarts: int = Field(1, ge=0)


class PerturbationSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    amplitudes: List[float] = Field(default_factory=lambda: [1.0e-3, 1.0e-2])
    mode: int = Field(3, ge=0)
    epsilon: Optional[float] = Field(None, gt=0)
    delta: float = Field(0.1, gt=0)
    refine_factor: int = Field(2, ge=2)

    @field_validator("amplitudes")
    @classmethod
    def amplitudes_positive(cls, value: List[float]) -> List[float]:
        if not value or any(a <= 0 for a in value):
            raise ValueError("amplitudes must be a non-empty list of positive numbers")
        return value


class KernelBoundsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    operators: List[KernelTagName] = Field(default_factory=lambda: ["G", "K", "G_evolving", "K_evolving"])
    orders: List[int] = Field(default_factory=lambda: [0, 1, 2])
    D: float = Field(2.0, ge=1.0)
    t_min: float = Field(1.0e-3, gt=0)
    t_max: float = Field(0.25, gt=0)
    time_samples: int = Field(17, ge=2)
    distance_samples: int = Field(65, ge=2)
    refinement_levels: int = Field(2, ge=1)
    growth_tolerance: float = Field(0.02, ge=0)
    time_derivative: bool = True

    @model_validator(mode="after")
    def window_ordered(self) -> "KernelBoundsSection":
        if self.t_min >= self.t_max:
            raise ValueError("t_min must be below t_max")
        if any(order not in (0, 1, 2) for order in self.orders):
            raise ValueError("orders must be drawn from 0, 1, 2")
        return self


class ContractionSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pairs: int = Field(50, ge=1)
    probe_pairs: int = Field(6, ge=1)
    delta_scales: List[float] = Field(default_factory=lambda: [1.0, 0.5, 0.25])


class NormsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    constant: float = 0.5
    epsilon: float = Field(1.0e-2, gt=0)
    random_pairs: int = Field(5, ge=1)


class OracleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    random_cases: int = Field(5, ge=0)
    amplitude: float = Field(0.02, gt=0)
    shift: float = Field(0.05, description="Radius offset of the concentric comparison")


class PlotSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    input: Optional[str] = None
    title: Optional[str] = None
    colormap: str = "viridis"


class ExperimentConfig(BaseModel):
    """One experiment run"""
    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "experiment": "existence",
                "geometry": {"kind": "circle", "radius_or_period": 1.0, "grid_size": 128},
                "resolution": {"time_nodes": 128},
                "horizon": 0.05,
                "seed": 7,
            }
        },
    )

    experiment: ExperimentName
    geometry: GeometrySpec
    resolution: ResolutionSpec = Field(default_factory=ResolutionSpec)
    horizon: float = Field(..., gt=0, description="Time horizon T")
    seed: int = Field(0, ge=0, lt=2 ** 64)
    tolerances: ToleranceSpec = Field(default_factory=ToleranceSpec)
    output_dir: str = "output"
    workers: int = Field(1, ge=1)

    picard: PicardSection = Field(default_factory=PicardSection)
    perturbation: PerturbationSection = Field(default_factory=PerturbationSection)
    kernel_bounds: KernelBoundsSection = Field(default_factory=KernelBoundsSection)
    contraction: ContractionSection = Field(default_factory=ContractionSection)
    norms: NormsSection = Field(default_factory=NormsSection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    plot: PlotSection = Field(default_factory=PlotSection)


class LoggingSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    format: Literal["json", "plain"] = "json"


class ArtifactSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    csv_digits: int = Field(17, ge=1, le=17)
    snapshot_stride: int = Field(1, ge=1, description="Write every k-th time slice to snapshot CSVs")


class GlobalSettings(BaseModel):
    """Contents of config/config.yaml"""
    model_config = ConfigDict(extra="forbid")

    logging: LoggingSettings = Field(default_factory=LoggingSettings)
    artifacts: ArtifactSettings = Field(default_factory=ArtifactSettings)


# ========== Results ==========

class FittedConstant(BaseModel):
    """A constant fitted from seeded probes"""
    operator: str
    C_fit: float
    samples: int
    seed: int
    ratios: List[float] = Field(default_factory=list)


class CheckResult(BaseModel):
    """One pass/fail check inside an experiment"""
    name: str
    passed: bool
    value: Optional[float] = None
    bound: Optional[float] = None
    detail: str = ""


class ExperimentSummary(BaseModel):
    """Summary JSON written at the end of every experiment"""
    experiment: str
    passed: bool = Field(..., serialization_alias="pass")
    version: str
    config: Dict
    checks: List[CheckResult] = Field(default_factory=list)
    fitted_constants: Dict[str, float] = Field(default_factory=dict)
    max_errors: Dict[str, float] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)

    def failed_checks(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]
