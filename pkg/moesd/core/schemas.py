"""
Typed records shared across the toolkit.

Every record is a pydantic model; value types are frozen and reject unknown
fields so JSON scenario files fail early on typos.
"""

from __future__ import annotations

import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

Variant = Literal["alg1", "eq2"]

PARAM_NAMES: Tuple[str, ...] = (
    "bias",
    "k1",
    "k2",
    "k3",
    "draft_bias",
    "draft_k",
    "reject_bias",
    "reject_k",
    "lambda",
    "s",
)
TIME_PARAM_NAMES: Tuple[str, ...] = PARAM_NAMES[:8]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


# --------------------------- Architecture --------------------------- #

class MoEArch(_Frozen):
    """Expert-count/activation architecture of the target model."""

    total_experts: int = Field(..., ge=1)
    active_per_token: int = Field(..., ge=1)
    label: str = ""

    @model_validator(mode="after")
    def _check_active(self) -> "MoEArch":
        if self.active_per_token > self.total_experts:
            raise ValueError(
                f"active_per_token ({self.active_per_token}) exceeds total_experts ({self.total_experts})"
            )
        return self

    @property
    def sparsity(self) -> float:
        return self.active_per_token / self.total_experts

    @property
    def is_dense(self) -> bool:
        return self.active_per_token == self.total_experts

    def with_active(self, active_per_token: int) -> "MoEArch":
        return MoEArch(total_experts=self.total_experts, active_per_token=active_per_token, label=self.label)


class ActivationQuery(_Frozen):
    token_count: int = Field(..., ge=1)
    saturation_ratio: float = Field(0.95, gt=0.0, lt=1.0)


# --------------------------- Speculation --------------------------- #

class SpecConfig(_Frozen):
    """Speculation workload: draft length plus acceptance rate and/or yield."""

    draft_length: int = Field(..., ge=1)
    acceptance_rate: Optional[float] = Field(None, ge=0.0, le=1.0)
    yield_ratio: Optional[float] = Field(None, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_rates(self) -> "SpecConfig":
        from .speculation import sigma_from_alpha

        if self.acceptance_rate is None and self.yield_ratio is None:
            raise ValueError("one of acceptance_rate or yield_ratio is required")
        floor = 1.0 / (self.draft_length + 1)
        if self.yield_ratio is not None and self.yield_ratio < floor - 1e-12:
            raise ValueError(f"yield_ratio {self.yield_ratio} below attainable floor {floor}")
        if self.acceptance_rate is not None and self.yield_ratio is not None:
            implied = sigma_from_alpha(self.acceptance_rate, self.draft_length)
            if abs(implied - self.yield_ratio) > 1e-9:
                raise ValueError(
                    f"acceptance_rate {self.acceptance_rate} implies yield {implied}, got {self.yield_ratio}"
                )
        return self

    @property
    def sigma(self) -> float:
        from .speculation import sigma_from_alpha

        if self.yield_ratio is not None:
            return self.yield_ratio
        return sigma_from_alpha(self.acceptance_rate, self.draft_length)

    @property
    def alpha(self) -> float:
        from .speculation import alpha_from_sigma

        if self.acceptance_rate is not None:
            return self.acceptance_rate
        return alpha_from_sigma(self.yield_ratio, self.draft_length)

    def with_draft_length(self, draft_length: int) -> "SpecConfig":
        """Same acceptance rate, different draft length."""
        return SpecConfig(draft_length=draft_length, acceptance_rate=self.alpha)


# --------------------------- Hardware --------------------------- #

class HardwareSpec(_Frozen):
    peak_compute: float = Field(..., gt=0.0, description="operations per second")
    peak_bandwidth: float = Field(..., gt=0.0, description="bytes per second")
    gpu_count: int = Field(1, ge=1)
    label: str = ""

    @property
    def ridge_point(self) -> float:
        return self.peak_compute / self.peak_bandwidth


class VolumeSpec(_Frozen):
    dense_param_count: float = Field(..., gt=0.0)
    expert_param_count: float = Field(..., gt=0.0)
    draft_param_count: float = Field(..., gt=0.0)
    bitwidth: int = Field(16, ge=1)

    @property
    def bytes_per_param(self) -> float:
        return self.bitwidth / 8.0


# --------------------------- Cost model --------------------------- #

class CostParams(_Frozen):
    """The ten relaxation parameters of the speedup model."""

    bias: float = Field(..., ge=0.0)
    k1: float = Field(..., ge=0.0)
    k2: float = Field(..., ge=0.0)
    k3: float = Field(..., ge=0.0)
    draft_bias: float = Field(..., ge=0.0)
    draft_k: float = Field(..., ge=0.0)
    reject_bias: float = Field(..., ge=0.0)
    reject_k: float = Field(..., ge=0.0)
    lam: float = Field(..., alias="lambda", ge=0.2, le=1.0)
    s: float = Field(..., gt=1.0, le=2.0)

    def to_vector(self) -> List[float]:
        return [
            self.bias, self.k1, self.k2, self.k3,
            self.draft_bias, self.draft_k, self.reject_bias, self.reject_k,
            self.lam, self.s,
        ]

    @classmethod
    def from_vector(cls, values) -> "CostParams":
        values = [float(v) for v in values]
        if len(values) != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} values, got {len(values)}")
        return cls(**dict(zip(PARAM_NAMES, values)))

    def scaled(self, factor: float) -> "CostParams":
        """Multiply the eight time coefficients by `factor`."""
        values = self.to_vector()
        return CostParams.from_vector([v * factor for v in values[:8]] + values[8:])

    def as_dict(self) -> Dict[str, float]:
        return self.model_dump(by_alias=True)


class ForwardTerms(_Frozen):
    """Additive terms of one target-model forward pass."""

    bias: float
    dense_growth: float
    expert_loading: float
    expert_growth: float

    @property
    def total(self) -> float:
        return self.bias + self.dense_growth + self.expert_loading + self.expert_growth


class ForwardPass(_Frozen):
    tokens: float
    activated_experts: float
    expert_load: float
    terms: ForwardTerms
    time: float


class ForwardBreakdown(_Frozen):
    ar_time: float
    verify_time: float
    draft_time: float
    reject_time: float
    n_ar: float
    n_sd: float
    t_ar: float
    t_sd: float
    ar_terms: ForwardTerms
    verify_terms: ForwardTerms


class SpeedupReport(_Frozen):
    batch_size: int
    draft_length: int
    sigma: float
    variant: Variant
    speedup: float
    target_efficiency: float
    threshold_tokens: int
    transition_tokens: float
    ar_expert_regime: str
    verify_expert_regime: str
    verify_saturated: bool
    breakdown: ForwardBreakdown


class SweepResult(_Frozen):
    batch_sizes: List[int]
    speedups: List[float]
    target_efficiencies: List[float]
    peak_speedup: float
    peak_batch: int
    robust_range: Tuple[int, int]
    robust_threshold: float

    @property
    def robust_width(self) -> int:
        return self.robust_range[1] - self.robust_range[0]


# --------------------------- Calibration --------------------------- #

class Measurement(_Frozen):
    """One profiled observation; field names match the CSV header."""

    batch_size: int = Field(..., ge=1)
    gamma: int = Field(..., ge=1)
    K: int = Field(..., ge=1)
    E: int = Field(..., ge=1)
    sigma: float = Field(..., gt=0.0, le=1.0)
    speedup: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _check_experts(self) -> "Measurement":
        if self.K > self.E:
            raise ValueError(f"K ({self.K}) exceeds E ({self.E})")
        return self

    @property
    def sort_key(self) -> Tuple[int, int, int]:
        return (self.K, self.gamma, self.batch_size)


class ParamBounds(_Frozen):
    """Lower/upper pair per CostParams field, keyed by PARAM_NAMES."""

    bounds: Dict[str, Tuple[float, float]]

    @field_validator("bounds", mode="before")
    @classmethod
    def _read_open_upper(cls, value: Any) -> Any:
        # profiles store an unbounded upper limit as null
        if not isinstance(value, dict):
            return value
        return {
            name: (pair[0], math.inf if pair[1] is None else pair[1])
            if isinstance(pair, (list, tuple)) and len(pair) == 2 else pair
            for name, pair in value.items()
        }

    @field_serializer("bounds", when_used="json")
    def _write_open_upper(self, bounds: Dict[str, Tuple[float, float]]) -> Dict[str, List[Optional[float]]]:
        return {name: [lo, None if math.isinf(hi) else hi] for name, (lo, hi) in bounds.items()}

    @model_validator(mode="after")
    def _check_bounds(self) -> "ParamBounds":
        missing = [name for name in PARAM_NAMES if name not in self.bounds]
        if missing:
            raise ValueError(f"missing bounds for {missing}")
        extra = sorted(set(self.bounds) - set(PARAM_NAMES))
        if extra:
            raise ValueError(f"unknown bound names {extra}")
        for name, (lo, hi) in self.bounds.items():
            if math.isnan(lo) or math.isnan(hi) or lo > hi:
                raise ValueError(f"invalid bounds for {name}: [{lo}, {hi}]")
            if lo < 0.0:
                raise ValueError(f"negative lower bound for {name}")
        lam_lo, lam_hi = self.bounds["lambda"]
        if lam_lo < 0.2 or lam_hi > 1.0:
            raise ValueError("lambda bounds must lie within [0.2, 1]")
        s_lo, s_hi = self.bounds["s"]
        if s_lo < 1.0 or s_hi > 2.0 or s_hi <= 1.0:
            raise ValueError("s bounds must lie within (1, 2]")
        return self

    def lower(self) -> List[float]:
        return [self.bounds[name][0] for name in PARAM_NAMES]

    def upper(self) -> List[float]:
        return [self.bounds[name][1] for name in PARAM_NAMES]

    def contains(self, params: CostParams) -> bool:
        for name, value in zip(PARAM_NAMES, params.to_vector()):
            lo, hi = self.bounds[name]
            if value < lo or value > hi:
                return False
        return True

    def scaled(self, name: str, factor: float) -> "ParamBounds":
        lo, hi = self.bounds[name]
        return ParamBounds(bounds={**self.bounds, name: (lo * factor, hi * factor)})


class FitConfig(_Frozen):
    variant: Variant = "alg1"
    max_iterations: int = Field(2000, ge=1, description="function evaluations per start")
    tolerance: float = Field(1e-12, gt=0.0)
    multi_start_count: int = Field(8, ge=1)
    seed: int = 0
    workers: int = Field(4, ge=1)


class ResidualSummary(_Frozen):
    max_abs: float
    mean_abs: float
    rms: float


class FitResult(_Frozen):
    params: CostParams
    objective: float = Field(..., description="0.5 * sum of squared residuals")
    mse: float = Field(..., description="sum of squared residuals / m")
    residuals: List[float]
    iterations: int
    converged: bool
    seed: int
    start_index: int
    starts: int
    message: str = ""
    runtime_seconds: float = 0.0
    batch_sizes_involved: List[int] = Field(default_factory=list)

    @property
    def measurement_count(self) -> int:
        return len(self.residuals)

    def residual_summary(self) -> ResidualSummary:
        if not self.residuals:
            return ResidualSummary(max_abs=0.0, mean_abs=0.0, rms=0.0)
        absolute = [abs(r) for r in self.residuals]
        return ResidualSummary(
            max_abs=max(absolute),
            mean_abs=sum(absolute) / len(absolute),
            rms=math.sqrt(self.mse),
        )


class SynthesisGrid(_Frozen):
    k_values: List[int] = Field(..., min_length=1)
    gammas: List[int] = Field(..., min_length=1)
    batch_sizes: List[int] = Field(..., min_length=1)
    total_experts: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _check_grid(self) -> "SynthesisGrid":
        if any(k < 1 or k > self.total_experts for k in self.k_values):
            raise ValueError("every K must lie in [1, total_experts]")
        if any(g < 1 for g in self.gammas) or any(b < 1 for b in self.batch_sizes):
            raise ValueError("draft lengths and batch sizes must be positive")
        return self

    @property
    def size(self) -> int:
        return len(self.k_values) * len(self.gammas) * len(self.batch_sizes)


class StrideStudyRow(_Frozen):
    stride: int
    begin: int
    m: int
    mse: float
    objective: float
    converged: bool
    batch_sizes: List[int]


class CalibrationProfile(_Frozen):
    """Persisted outcome of a fit, enough to re-predict or re-synthesize."""

    params: CostParams
    bounds: ParamBounds
    objective: float
    mse: float
    residual_summary: ResidualSummary
    seed: int
    converged: bool
    iterations: int
    variant: Variant
    hardware: HardwareSpec
    total_experts: int
    spec: Optional[SpecConfig] = None
    measurement_count: int
    stride: int = 1
    begin: int = 0
    batch_sizes_involved: List[int] = Field(default_factory=list)
    solver: Dict[str, Any] = Field(default_factory=dict)


# --------------------------- Monte Carlo --------------------------- #

class McEstimate(_Frozen):
    mean: float
    std_error: float
    trials: int = Field(..., ge=1)
    seed: int
    algorithm: str = "PCG64"

    def agrees_with(self, expected: float, sigmas: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - expected) <= sigmas * self.std_error + slack + 1e-9 * max(1.0, abs(expected))


class CheckResult(_Frozen):
    suite: str
    name: str
    passed: bool
    observed: float
    expected: float
    tolerance: float

    @property
    def margin(self) -> float:
        """Tolerance left over; negative when the check failed."""
        return self.tolerance - abs(self.observed - self.expected)


class SuiteReport(_Frozen):
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]


# --------------------------- Scenario --------------------------- #

class CalibrationSettings(_Frozen):
    reject_time_ceiling: Optional[float] = Field(None, gt=0.0)


class ScenarioConfig(_Frozen):
    """Everything `predict`, `sweep` and `fit` need, loaded from JSON."""

    arch: MoEArch
    hw: HardwareSpec
    vol: Optional[VolumeSpec] = None
    spec: SpecConfig
    params: Optional[CostParams] = None
    profile: Optional[str] = None
    variant: Variant = "alg1"
    saturation_ratio: float = Field(0.95, gt=0.0, lt=1.0)
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)
