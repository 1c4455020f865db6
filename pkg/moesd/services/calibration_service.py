"""
Calibration of CostParams from measured speedups.

Usage:
    bounds = default_bounds(scenario.vol, scenario.hw, measurements)
    subset = stride_select(measurements, stride=11)
    result = fit(subset, bounds, scenario.hw, FitConfig(seed=0))

The fit minimizes 0.5 * sum((predicted - observed)^2) with a bounded
trust-region-reflective solver, restarted from several seeded points.
"""

from __future__ import annotations

import logging
import math
import time
from functools import partial
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from ..core.cost_model import speedup_array
from ..core.errors import CalibrationInputError, FitNotConvergedError
from ..core.presets import MIN_FIT_MEASUREMENTS
from ..core.schemas import (
    PARAM_NAMES,
    CalibrationProfile,
    CostParams,
    FitConfig,
    FitResult,
    HardwareSpec,
    Measurement,
    ParamBounds,
    SpecConfig,
    StrideStudyRow,
    SynthesisGrid,
    Variant,
    VolumeSpec,
)
from ..core.speculation import sigma_from_alpha
from .parallel import gather_in_threads

logger = logging.getLogger(__name__)

BOUND_SPAN = 5.0
S_MARGIN = 1e-6
UNBOUNDED_CAP = 1e12
_RATIO_PARAMS = ("lambda", "s")


# --------------------------- Bounds --------------------------- #

def default_bounds(
    vol: Optional[VolumeSpec],
    hw: Optional[HardwareSpec],
    measurements: Sequence[Measurement],
    reject_time_ceiling: Optional[float] = None,
) -> ParamBounds:
    """
    Box bounds anchored on the theoretical minimum loading times.

    bias, k2 and draft_bias range over [t_min, 5 * t_min], with t_min the time
    to stream the dense, one-expert or draft weights at peak bandwidth. The
    rejection terms are capped by `reject_time_ceiling` (default: the bias
    upper bound).
    """
    if vol is None:
        raise CalibrationInputError("parameter volumes are required to derive bounds")
    if hw is None:
        raise CalibrationInputError("hardware bandwidth is required to derive bounds")
    if not measurements:
        raise CalibrationInputError("no measurements to calibrate against")

    bytes_per_param = vol.bytes_per_param
    bias_min = vol.dense_param_count * bytes_per_param / hw.peak_bandwidth
    k2_min = vol.expert_param_count * bytes_per_param / hw.peak_bandwidth
    draft_min = vol.draft_param_count * bytes_per_param / hw.peak_bandwidth
    t_rej = reject_time_ceiling if reject_time_ceiling is not None else BOUND_SPAN * bias_min

    return ParamBounds(bounds={
        "bias": (bias_min, BOUND_SPAN * bias_min),
        "k1": (0.0, math.inf),
        "k2": (k2_min, BOUND_SPAN * k2_min),
        "k3": (0.0, math.inf),
        "draft_bias": (draft_min, BOUND_SPAN * draft_min),
        "draft_k": (0.0, math.inf),
        "reject_bias": (0.0, t_rej),
        "reject_k": (0.0, t_rej),
        "lambda": (0.2, 1.0),
        "s": (1.0, 2.0),
    })


# --------------------------- Subsets --------------------------- #

def sort_measurements(measurements: Sequence[Measurement]) -> List[Measurement]:
    """Order by K, then draft length, then batch size."""
    return sorted(measurements, key=lambda m: m.sort_key)


def stride_select(
    measurements: Sequence[Measurement],
    stride: int,
    begin: int = 0,
    end: Optional[int] = None,
) -> List[Measurement]:
    """Every `stride`-th measurement of the sorted table, from `begin` up to `end`."""
    if stride < 1:
        raise CalibrationInputError(f"stride must be >= 1, got {stride}")
    ordered = sort_measurements(measurements)
    total = len(ordered)
    if begin < 0 or begin >= total:
        raise CalibrationInputError(f"begin offset {begin} outside table of {total} measurements")
    subset = ordered[begin:end:stride]
    logger.info("Stride %s from offset %s selects %s of %s measurements", stride, begin, len(subset), total)
    return subset


def coverage(measurements: Sequence[Measurement]) -> List[int]:
    """Distinct batch sizes present in a measurement set."""
    return sorted({m.batch_size for m in measurements})


# --------------------------- Objective --------------------------- #

class _Table:
    """Column view of a measurement list for vectorized evaluation."""

    def __init__(self, measurements: Sequence[Measurement]):
        self.batch = np.array([m.batch_size for m in measurements], dtype=float)
        self.gamma = np.array([m.gamma for m in measurements], dtype=float)
        self.active = np.array([m.K for m in measurements], dtype=float)
        self.total = np.array([m.E for m in measurements], dtype=float)
        self.sigma = np.array([m.sigma for m in measurements], dtype=float)
        self.observed = np.array([m.speedup for m in measurements], dtype=float)

    def predict(self, vector, ridge_point: float, variant: Variant) -> np.ndarray:
        return speedup_array(
            vector, self.batch, self.gamma, self.active, self.total, self.sigma, ridge_point, variant
        )


def predict_measurements(
    params: CostParams,
    measurements: Sequence[Measurement],
    hw: HardwareSpec,
    variant: Variant = "alg1",
) -> np.ndarray:
    """Model speedup at every measurement's (B, gamma, K, E, sigma)."""
    if not measurements:
        return np.zeros(0)
    return _Table(measurements).predict(params.to_vector(), hw.ridge_point, variant)


def residuals(
    params: CostParams,
    measurements: Sequence[Measurement],
    hw: HardwareSpec,
    variant: Variant = "alg1",
) -> np.ndarray:
    """Signed prediction errors, predicted minus observed."""
    table = _Table(measurements)
    return table.predict(params.to_vector(), hw.ridge_point, variant) - table.observed


def objective(
    params: CostParams,
    measurements: Sequence[Measurement],
    hw: HardwareSpec,
    variant: Variant = "alg1",
) -> float:
    """0.5 * sum of squared residuals."""
    r = residuals(params, measurements, hw, variant)
    return 0.5 * float(np.dot(r, r))


def mean_squared_error(
    params: CostParams,
    measurements: Sequence[Measurement],
    hw: HardwareSpec,
    variant: Variant = "alg1",
) -> float:
    r = residuals(params, measurements, hw, variant)
    return float(np.dot(r, r)) / len(r)


# --------------------------- Fit --------------------------- #

class _Problem:
    """
    Normalized solver space: each parameter is divided by a scale so the
    free variables are O(1). Parameters whose bounds collapse to a point are
    held fixed and never reach the solver.
    """

    def __init__(self, bounds: ParamBounds, table: _Table, ridge_point: float, variant: Variant):
        lower = np.array(bounds.lower(), dtype=float)
        upper = np.array(bounds.upper(), dtype=float)
        s_index = PARAM_NAMES.index("s")
        lower[s_index] = max(lower[s_index], 1.0 + S_MARGIN)

        finite = [hi for name, hi in zip(PARAM_NAMES, upper) if name not in _RATIO_PARAMS and math.isfinite(hi)]
        self.sampling_ceiling = max(finite) if finite else 1.0
        sample_upper = np.where(np.isfinite(upper), upper, self.sampling_ceiling)
        upper = np.minimum(upper, UNBOUNDED_CAP)

        self.scale = np.array([
            1.0 if name in _RATIO_PARAMS else (hi if hi > 0.0 else 1.0)
            for name, hi in zip(PARAM_NAMES, sample_upper)
        ])
        self.lower = lower
        self.upper = upper
        self.sample_upper = np.maximum(sample_upper, lower)
        self.free = upper > lower
        self.table = table
        self.ridge_point = ridge_point
        self.variant = variant

    def to_params(self, free_x: np.ndarray) -> np.ndarray:
        full = self.lower.copy()
        np.place(full, self.free, free_x * self.scale[self.free])
        return np.clip(full, self.lower, self.upper)

    def residuals(self, free_x: np.ndarray) -> np.ndarray:
        return self.table.predict(self.to_params(free_x), self.ridge_point, self.variant) - self.table.observed

    def solver_bounds(self):
        return self.lower[self.free] / self.scale[self.free], self.upper[self.free] / self.scale[self.free]

    def starts(self, count: int, seed: int) -> List[np.ndarray]:
        """Box midpoint first, then seeded uniform draws over the sampling box."""
        lo = self.lower[self.free] / self.scale[self.free]
        hi = self.sample_upper[self.free] / self.scale[self.free]
        rng = np.random.default_rng(seed)
        points = [0.5 * (lo + hi)]
        for _ in range(count - 1):
            points.append(rng.uniform(lo, hi))
        # least_squares wants x0 strictly feasible
        solver_lo, solver_hi = self.solver_bounds()
        return [np.clip(p, solver_lo, solver_hi) for p in points]


def _solve_start(problem: _Problem, x0: np.ndarray, index: int, config: FitConfig):
    initial = problem.residuals(x0)
    initial_cost = 0.5 * float(np.dot(initial, initial))
    lo, hi = problem.solver_bounds()
    res = least_squares(
        problem.residuals,
        x0=x0,
        bounds=(lo, hi),
        method="trf",
        jac="2-point",
        ftol=config.tolerance,
        xtol=config.tolerance,
        gtol=config.tolerance,
        max_nfev=config.max_iterations,
    )
    if res.cost > initial_cost:
        logger.debug("start %s: solver ended above its initial point, keeping x0", index)
        return index, x0, initial_cost, res.nfev, res.status, res.message
    logger.debug("start %s: cost=%s nfev=%s status=%s", index, res.cost, res.nfev, res.status)
    return index, res.x, float(res.cost), res.nfev, res.status, res.message


def fit(
    measurements: Sequence[Measurement],
    bounds: ParamBounds,
    hw: HardwareSpec,
    config: Optional[FitConfig] = None,
    strict: bool = False,
) -> FitResult:
    """
    Bounded least-squares fit of CostParams, best of `multi_start_count` seeded starts.

    Raises:
        CalibrationInputError: fewer than 10 measurements
        FitNotConvergedError: strict mode and the best start did not meet its tolerances
    """
    config = config or FitConfig()
    if len(measurements) < MIN_FIT_MEASUREMENTS:
        raise CalibrationInputError(
            f"need at least {MIN_FIT_MEASUREMENTS} measurements to fit, got {len(measurements)}"
        )

    started = time.perf_counter()
    problem = _Problem(bounds, _Table(measurements), hw.ridge_point, config.variant)
    x0s = problem.starts(config.multi_start_count, config.seed)
    jobs = [partial(_solve_start, problem, x0, i, config) for i, x0 in enumerate(x0s)]
    outcomes = gather_in_threads(jobs, workers=config.workers)

    index, best_x, _, _, status, message = min(outcomes, key=lambda o: (o[2], o[0]))
    vector = problem.to_params(best_x)
    params = CostParams.from_vector(vector)
    r = problem.residuals(best_x)
    sq = float(np.dot(r, r))
    runtime = time.perf_counter() - started

    result = FitResult(
        params=params,
        objective=0.5 * sq,
        mse=sq / len(r),
        residuals=[float(v) for v in r],
        iterations=int(sum(o[3] for o in outcomes)),
        converged=status > 0,
        seed=config.seed,
        start_index=index,
        starts=len(x0s),
        message=str(message),
        runtime_seconds=runtime,
        batch_sizes_involved=coverage(measurements),
    )
    logger.info(
        "Fit on %s measurements: objective=%s mse=%s best_start=%s runtime=%.3fs",
        len(measurements), result.objective, result.mse, index, runtime,
    )
    if not result.converged:
        logger.warning("Fit did not converge: %s", message)
        if strict:
            raise FitNotConvergedError(f"fit did not converge: {message}", result=result)
    return result


def build_profile(
    result: FitResult,
    bounds: ParamBounds,
    hw: HardwareSpec,
    total_experts: int,
    config: FitConfig,
    spec: Optional[SpecConfig] = None,
    stride: int = 1,
    begin: int = 0,
) -> CalibrationProfile:
    """Persistable record of a fit."""
    return CalibrationProfile(
        params=result.params,
        bounds=bounds,
        objective=result.objective,
        mse=result.mse,
        residual_summary=result.residual_summary(),
        seed=result.seed,
        converged=result.converged,
        iterations=result.iterations,
        variant=config.variant,
        hardware=hw,
        total_experts=total_experts,
        spec=spec,
        measurement_count=result.measurement_count,
        stride=stride,
        begin=begin,
        batch_sizes_involved=result.batch_sizes_involved,
        solver={
            "method": "trf",
            "tolerance": config.tolerance,
            "max_iterations": config.max_iterations,
            "starts": result.starts,
            "best_start": result.start_index,
            "message": result.message,
            "runtime_seconds": result.runtime_seconds,
        },
    )


# --------------------------- Studies --------------------------- #

def stride_study(
    measurements: Sequence[Measurement],
    bounds: ParamBounds,
    hw: HardwareSpec,
    strides: Sequence[int],
    config: Optional[FitConfig] = None,
    begin: int = 0,
) -> List[StrideStudyRow]:
    """
    Fit on each stride subset and score the fit on the full table.

    Strides whose subset falls under the minimum fit size are skipped.
    """
    config = config or FitConfig()
    rows: List[StrideStudyRow] = []
    for stride in strides:
        subset = stride_select(measurements, stride, begin)
        if len(subset) < MIN_FIT_MEASUREMENTS:
            logger.warning("Skipping stride %s: only %s measurements", stride, len(subset))
            continue
        result = fit(subset, bounds, hw, config)
        rows.append(StrideStudyRow(
            stride=stride,
            begin=begin,
            m=len(subset),
            mse=mean_squared_error(result.params, measurements, hw, config.variant),
            objective=result.objective,
            converged=result.converged,
            batch_sizes=result.batch_sizes_involved,
        ))
    return rows


# --------------------------- Synthesis --------------------------- #

def synthesize_measurements(
    true_params: CostParams,
    hw: HardwareSpec,
    grid: SynthesisGrid,
    acceptance_rate: float,
    noise: float = 0.0,
    seed: int = 0,
    variant: Variant = "alg1",
) -> List[Measurement]:
    """
    Model-generated measurements over a K x gamma x B grid, sorted by (K, gamma, B).

    Yield follows a constant acceptance rate; `noise` is the relative standard
    deviation of a multiplicative Gaussian perturbation.
    """
    if noise < 0.0:
        raise CalibrationInputError(f"noise must be >= 0, got {noise}")
    keys = [(k, g, b) for k in grid.k_values for g in grid.gammas for b in grid.batch_sizes]
    table = [
        Measurement(batch_size=b, gamma=g, K=k, E=grid.total_experts,
                    sigma=sigma_from_alpha(acceptance_rate, g), speedup=1.0)
        for k, g, b in keys
    ]
    clean = predict_measurements(true_params, table, hw, variant)
    rng = np.random.default_rng(seed)
    factors = 1.0 + noise * rng.standard_normal(len(table)) if noise > 0.0 else np.ones(len(table))
    noisy = clean * factors
    if np.any(noisy <= 0.0):
        raise CalibrationInputError(f"noise level {noise} produced non-positive speedups")
    return [m.model_copy(update={"speedup": float(x)}) for m, x in zip(table, noisy)]
