"""
Forward-time decomposition and speedup model for speculative decoding on MoE.

A target forward over t tokens costs
    bias + k1*G(t) + k2*N(t) + k3*G(t*K/N(t))
with G the roofline growth curve at transition lambda*RP. The draft pass costs
draft_bias + draft_k*G(B), rejection sampling reject_bias + reject_k*B.

Two speedup variants are exposed:
    alg1: sigma*(gamma+1)*ar / (draft + ar + verify + reject)   (used for fitting)
    eq2:  sigma*(gamma+1)*ar / (gamma*draft + verify + reject)
"""

from __future__ import annotations

import math
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .errors import ModelDomainError
from .expert_stats import activated_experts_array, full_activation_threshold, is_saturated
from .presets import DEFAULT_SATURATION_RATIO, ROBUST_RANGE_DECAY
from .roofline import DEFAULT_LOG_CAP, classify_boundness, growth_curve
from .schemas import (
    ActivationQuery,
    CostParams,
    ForwardBreakdown,
    ForwardPass,
    ForwardTerms,
    HardwareSpec,
    MoEArch,
    SpecConfig,
    SpeedupReport,
    SweepResult,
    Variant,
)

VARIANTS: Tuple[str, ...] = ("alg1", "eq2")

ParamsLike = Union[CostParams, Sequence[float]]


def _vector(params: ParamsLike) -> np.ndarray:
    if isinstance(params, CostParams):
        return np.asarray(params.to_vector(), dtype=float)
    return np.asarray(params, dtype=float)


def _check_batch(batch) -> np.ndarray:
    arr = np.asarray(batch, dtype=float)
    if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr < 1.0):
        raise ModelDomainError(f"batch size must be >= 1, got {batch!r}")
    return arr


def _check_gamma(gamma) -> np.ndarray:
    arr = np.asarray(gamma, dtype=float)
    if np.any(arr < 1.0) or np.any(arr != np.floor(arr)):
        raise ModelDomainError(f"draft length must be a positive integer, got {gamma!r}")
    return arr


# --------------------------- Vectorized core --------------------------- #

def forward_terms_array(params: ParamsLike, tokens, active, total, ridge_point: float,
                        log_cap: float = DEFAULT_LOG_CAP):
    """
    Target forward pass over arrays of token counts.

    Returns:
        (time, activated_experts, expert_load, (bias, dense_growth, expert_loading, expert_growth))
    """
    p = _vector(params)
    tokens = _check_batch(tokens)
    bias, k1, k2, k3 = p[0], p[1], p[2], p[3]
    transition = p[8] * ridge_point
    activated = activated_experts_array(total, active, tokens)
    load = tokens * np.asarray(active, dtype=float) / activated
    bias_term = np.full(np.broadcast(tokens, activated).shape, bias, dtype=float)
    dense_growth = k1 * np.asarray(growth_curve(tokens, transition, p[9], log_cap))
    expert_loading = k2 * activated
    expert_growth = k3 * np.asarray(growth_curve(load, transition, p[9], log_cap))
    time = bias_term + dense_growth + expert_loading + expert_growth
    return time, activated, load, (bias_term, dense_growth, expert_loading, expert_growth)


def draft_time_array(params: ParamsLike, batch, ridge_point: float, log_cap: float = DEFAULT_LOG_CAP):
    p = _vector(params)
    batch = _check_batch(batch)
    return p[4] + p[5] * np.asarray(growth_curve(batch, p[8] * ridge_point, p[9], log_cap))


def reject_time_array(params: ParamsLike, batch):
    p = _vector(params)
    return p[6] + p[7] * _check_batch(batch)


def speedup_array(params: ParamsLike, batch, gamma, active, total, sigma, ridge_point: float,
                  variant: Variant = "alg1", log_cap: float = DEFAULT_LOG_CAP) -> np.ndarray:
    """ComputeSpeedup evaluated element-wise over broadcastable workload arrays."""
    if variant not in VARIANTS:
        raise ModelDomainError(f"unknown speedup variant {variant!r}")
    batch = _check_batch(batch)
    gamma = _check_gamma(gamma)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0) or np.any(sigma > 1.0):
        raise ModelDomainError("yield sigma must lie in (0, 1]")

    ar, _, _, _ = forward_terms_array(params, batch, active, total, ridge_point, log_cap)
    verify, _, _, _ = forward_terms_array(params, batch * gamma, active, total, ridge_point, log_cap)
    draft = draft_time_array(params, batch, ridge_point, log_cap)
    reject = reject_time_array(params, batch)

    if variant == "alg1":
        denominator = draft + ar + verify + reject
    else:
        denominator = gamma * draft + verify + reject
    if np.any(denominator <= 0.0):
        raise ModelDomainError("speedup denominator is zero")
    return sigma * (gamma + 1.0) * ar / denominator


# --------------------------- Scalar operations --------------------------- #

def _forward_pass(params: CostParams, arch: MoEArch, hw: HardwareSpec, tokens: float) -> ForwardPass:
    time, activated, load, terms = forward_terms_array(
        params, tokens, arch.active_per_token, arch.total_experts, hw.ridge_point
    )
    return ForwardPass(
        tokens=float(tokens),
        activated_experts=float(activated),
        expert_load=float(load),
        terms=ForwardTerms(
            bias=float(terms[0]),
            dense_growth=float(terms[1]),
            expert_loading=float(terms[2]),
            expert_growth=float(terms[3]),
        ),
        time=float(time),
    )


def ar_forward_time(params: CostParams, arch: MoEArch, hw: HardwareSpec, batch_size: int) -> ForwardPass:
    """Autoregressive target forward over B tokens."""
    _check_batch(batch_size)
    return _forward_pass(params, arch, hw, batch_size)


def verify_forward_time(params: CostParams, arch: MoEArch, hw: HardwareSpec,
                        batch_size: int, gamma: int) -> ForwardPass:
    """Verification forward over B*gamma tokens."""
    _check_batch(batch_size)
    _check_gamma(gamma)
    return _forward_pass(params, arch, hw, batch_size * gamma)


def draft_forward_time(params: CostParams, hw: HardwareSpec, batch_size: int) -> float:
    return float(draft_time_array(params, batch_size, hw.ridge_point))


def reject_time(params: CostParams, batch_size: int) -> float:
    return float(reject_time_array(params, batch_size))


def forward_breakdown(params: CostParams, arch: MoEArch, hw: HardwareSpec,
                      batch_size: int, gamma: int) -> ForwardBreakdown:
    ar = ar_forward_time(params, arch, hw, batch_size)
    verify = verify_forward_time(params, arch, hw, batch_size, gamma)
    return ForwardBreakdown(
        ar_time=ar.time,
        verify_time=verify.time,
        draft_time=draft_forward_time(params, hw, batch_size),
        reject_time=reject_time(params, batch_size),
        n_ar=ar.activated_experts,
        n_sd=verify.activated_experts,
        t_ar=ar.expert_load,
        t_sd=verify.expert_load,
        ar_terms=ar.terms,
        verify_terms=verify.terms,
    )


def _check_sigma(sigma: float, gamma: int) -> float:
    sigma = float(sigma)
    floor = 1.0 / (gamma + 1)
    if sigma > 1.0 or sigma < floor - 1e-12:
        raise ModelDomainError(f"yield {sigma} outside attainable range [{floor}, 1] for gamma={gamma}")
    return sigma


def compute_speedup(params: CostParams, arch: MoEArch, hw: HardwareSpec, batch_size: int,
                    gamma: int, sigma: float, variant: Variant = "alg1") -> float:
    """Predicted SD speedup for one workload."""
    _check_gamma(gamma)
    sigma = _check_sigma(sigma, gamma)
    return float(speedup_array(
        params, batch_size, gamma, arch.active_per_token, arch.total_experts,
        sigma, hw.ridge_point, variant,
    ))


def target_efficiency(params: CostParams, arch: MoEArch, hw: HardwareSpec,
                      batch_size: int, gamma: int) -> float:
    """T_T(B, 1) / T_T(B, gamma): the systemic share of the speedup."""
    ar = ar_forward_time(params, arch, hw, batch_size)
    verify = verify_forward_time(params, arch, hw, batch_size, gamma)
    if verify.time <= 0.0:
        raise ModelDomainError("verification time is zero")
    return ar.time / verify.time


def speedup_from_token_times(t_ar: float, t_sd: float) -> float:
    """Speedup from measured per-token latencies, x = T_AR / T_SD."""
    if t_ar <= 0.0 or t_sd <= 0.0:
        raise ModelDomainError("per-token times must be positive")
    return t_ar / t_sd


def speedup_report(params: CostParams, arch: MoEArch, hw: HardwareSpec, batch_size: int,
                   spec: SpecConfig, variant: Variant = "alg1",
                   tau: float = DEFAULT_SATURATION_RATIO) -> SpeedupReport:
    """Speedup, target efficiency and every intermediate quantity for one batch size."""
    gamma = spec.draft_length
    breakdown = forward_breakdown(params, arch, hw, batch_size, gamma)
    transition = params.lam * hw.ridge_point
    verify_query = ActivationQuery(token_count=batch_size * (gamma + 1), saturation_ratio=tau)
    return SpeedupReport(
        batch_size=batch_size,
        draft_length=gamma,
        sigma=spec.sigma,
        variant=variant,
        speedup=compute_speedup(params, arch, hw, batch_size, gamma, spec.sigma, variant),
        target_efficiency=target_efficiency(params, arch, hw, batch_size, gamma),
        threshold_tokens=full_activation_threshold(arch, tau),
        transition_tokens=transition,
        ar_expert_regime=classify_boundness(breakdown.t_ar, transition),
        verify_expert_regime=classify_boundness(breakdown.t_sd, transition),
        verify_saturated=is_saturated(arch, verify_query),
        breakdown=breakdown,
    )


# --------------------------- Sweeps --------------------------- #

def _check_batch_list(batch_list: Sequence[int]) -> List[int]:
    batches = [int(b) for b in batch_list]
    if not batches:
        raise ModelDomainError("batch list is empty")
    if any(b < 1 for b in batches):
        raise ModelDomainError("batch sizes must be >= 1")
    if any(b2 <= b1 for b1, b2 in zip(batches, batches[1:])):
        raise ModelDomainError("batch list must be strictly increasing")
    return batches


def robust_range(batches: Sequence[int], speedups: Sequence[float], peak_index: int,
                 threshold: float) -> Tuple[int, int]:
    """Widest contiguous run around the peak whose speedup stays >= threshold."""
    lo = hi = peak_index
    while lo > 0 and speedups[lo - 1] >= threshold:
        lo -= 1
    while hi < len(speedups) - 1 and speedups[hi + 1] >= threshold:
        hi += 1
    return batches[lo], batches[hi]


def sweep_batch(params: CostParams, arch: MoEArch, hw: HardwareSpec, gamma: int, sigma: float,
                batch_list: Sequence[int], variant: Variant = "alg1") -> SweepResult:
    """Speedup and target efficiency over a batch-size list, with peak and robust range."""
    batches = _check_batch_list(batch_list)
    _check_gamma(gamma)
    sigma = _check_sigma(sigma, gamma)
    batch_arr = np.asarray(batches, dtype=float)
    speedups = speedup_array(
        params, batch_arr, gamma, arch.active_per_token, arch.total_experts,
        sigma, hw.ridge_point, variant,
    )
    ar, _, _, _ = forward_terms_array(params, batch_arr, arch.active_per_token, arch.total_experts, hw.ridge_point)
    verify, _, _, _ = forward_terms_array(
        params, batch_arr * gamma, arch.active_per_token, arch.total_experts, hw.ridge_point
    )
    efficiencies = ar / verify

    speedup_list = [float(x) for x in np.atleast_1d(speedups)]
    peak_index = int(np.argmax(speedup_list))
    peak = speedup_list[peak_index]
    threshold = peak / ROBUST_RANGE_DECAY
    return SweepResult(
        batch_sizes=batches,
        speedups=speedup_list,
        target_efficiencies=[float(x) for x in np.atleast_1d(efficiencies)],
        peak_speedup=peak,
        peak_batch=batches[peak_index],
        robust_range=robust_range(batches, speedup_list, peak_index, threshold),
        robust_threshold=threshold,
    )


def compare_target_efficiency(params: CostParams, arch: MoEArch, hw: HardwareSpec, gamma: int,
                              batch_list: Sequence[int]) -> Dict[str, List[float]]:
    """Target efficiency of the MoE next to its dense counterpart (K = E)."""
    batches = _check_batch_list(batch_list)
    dense = arch.with_active(arch.total_experts)
    return {
        "batch_sizes": [float(b) for b in batches],
        "moe": [target_efficiency(params, arch, hw, b, gamma) for b in batches],
        "dense": [target_efficiency(params, dense, hw, b, gamma) for b in batches],
    }


def is_unimodal(values: Sequence[float]) -> bool:
    """True when the series rises (weakly) to its maximum and falls (weakly) after it."""
    if not values:
        return False
    peak = max(range(len(values)), key=lambda i: values[i])
    rising = all(values[i] <= values[i + 1] for i in range(peak))
    falling = all(values[i] >= values[i + 1] for i in range(peak, len(values) - 1))
    return rising and falling and not math.isnan(values[peak])
