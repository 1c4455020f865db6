"""
Self-validation suites run by `moesd validate`.

Suites:
    activation  - closed-form N(t), expert load and saturation threshold vs simulation / exhaustive search
    acceptance  - yield formula vs simulated speculation rounds
    roofline    - growth-curve continuity and the expert-load monotonicity bound
    fit         - synthesize -> fit -> predict round trip on the reference scenario
    model       - target-efficiency limits, batch-sweep trends, published-table ratios
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, Iterable, List

import numpy as np

from ..core import cost_model, expert_stats, roofline, speculation
from ..core.presets import (
    ATTENTION_DOMINATED_PARAMS,
    DEFAULT_GRID,
    FFN_DOMINATED_PARAMS,
    MOE_ARCHITECTURES,
    REFERENCE_ACCEPTANCE,
    REFERENCE_HARDWARE,
    REFERENCE_PARAMS,
    REFERENCE_REJECT_CEILING,
    REFERENCE_VOLUMES,
    TREND_HARDWARE,
    VALIDATION_ARCHITECTURES,
)
from ..core.schemas import (
    CheckResult,
    CostParams,
    FitConfig,
    HardwareSpec,
    MoEArch,
    SuiteReport,
    SynthesisGrid,
    VolumeSpec,
)
from . import calibration_service, mc_oracle

logger = logging.getLogger(__name__)

SUITES = ("activation", "acceptance", "roofline", "fit", "model")

ACTIVATION_TOKENS = (1, 2, 4, 8, 16, 32, 64, 128)
# Saturated token counts only: E[tK/N] and tK/E[N] differ by Var(N)/E[N]^2 in
# relative terms, which is large while N is still spreading.
LOAD_TOKENS = (1, 64, 128)
LOAD_JENSEN_ALLOWANCE = 1e-3
ACCEPTANCE_GAMMAS = (1, 2, 3, 4, 5)
ACCEPTANCE_ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95)
ACCEPTANCE_ROUNDS_FACTOR = 10
MONOTONICITY_TOKENS = tuple(2 ** i for i in range(1, 11))
MONOTONICITY_RHOS = tuple(np.linspace(0.01, 0.99, 50))
CONTINUITY_DRAWS = 20
THRESHOLD_DRAWS = 200
SIGMA_BOUND = 3.0

# (T_AR, T_SD, published speedup) per-token latencies
PUBLISHED_TOKEN_TIMES = (
    (15.96, 6.96, 2.29),
    (15.93, 7.31, 2.18),
)


def _check(suite: str, name: str, observed: float, expected: float, tolerance: float) -> CheckResult:
    observed = float(observed)
    expected = float(expected)
    passed = abs(observed - expected) <= tolerance
    return CheckResult(suite=suite, name=name, passed=passed, observed=observed,
                       expected=expected, tolerance=float(tolerance))


def _holds(suite: str, name: str, condition: bool) -> CheckResult:
    return _check(suite, name, 1.0 if condition else 0.0, 1.0, 0.0)


def _mc_tolerance(std_error: float, expected: float, slack: float = 0.0) -> float:
    return SIGMA_BOUND * std_error + slack + 1e-9 * max(1.0, abs(expected))


def activation_std_error_floor(arch: MoEArch, t: int, trials: int) -> float:
    """
    Standard error of the simulated N(t) implied by the analytic miss probability.

    Near saturation every trial can hit all E experts, leaving a sample spread
    of 0 while the analytic mean still sits a little below E. The per-expert
    miss indicators are negatively correlated, so E*m*(1-m) bounds Var(N)
    from above with m = (1 - rho)^t.
    """
    miss = 1.0 - expert_stats.activation_probability(arch, t)
    return math.sqrt(arch.total_experts * miss * (1.0 - miss) / trials)


# --------------------------- Suites --------------------------- #

def activation_suite(seed: int, trials: int, workers: int = 1, analytic_offset: float = 0.0) -> List[CheckResult]:
    checks: List[CheckResult] = []
    for name in VALIDATION_ARCHITECTURES:
        arch = MoEArch(**MOE_ARCHITECTURES[name])
        tag = f"E{arch.total_experts}K{arch.active_per_token}"
        for t in ACTIVATION_TOKENS:
            expected = expert_stats.expected_activated_experts(arch, t) + analytic_offset
            est = mc_oracle.simulate_activation(arch, t, trials, seed=seed, workers=workers)
            std_error = max(est.std_error, activation_std_error_floor(arch, t, trials))
            checks.append(_check("activation", f"N[{tag},t={t}]", est.mean, expected,
                                 _mc_tolerance(std_error, expected)))
        load_trials = max(1, trials // 10)
        for t in LOAD_TOKENS:
            expected = expert_stats.mean_expert_load(arch, t) + analytic_offset
            est = mc_oracle.simulate_expert_load(arch, t, load_trials, seed=seed, workers=workers)
            checks.append(_check("activation", f"load[{tag},t={t}]", est.mean, expected,
                                 _mc_tolerance(est.std_error, expected, LOAD_JENSEN_ALLOWANCE * expected)))

    checks.append(_check("activation", "threshold[rho=1/8,tau=0.95]",
                         expert_stats.full_activation_threshold(0.125, 0.95) + analytic_offset, 23, 0.0))
    checks.append(_check("activation", "threshold[rho=4/60,tau=0.95]",
                         expert_stats.full_activation_threshold(4 / 60, 0.95) + analytic_offset, 44, 0.0))
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(THRESHOLD_DRAWS):
        rho = float(rng.uniform(0.01, 0.99))
        tau = float(rng.uniform(0.05, 0.99))
        if expert_stats.full_activation_threshold(rho, tau) != exhaustive_threshold(rho, tau):
            mismatches += 1
    checks.append(_check("activation", f"threshold[{THRESHOLD_DRAWS} random pairs]", mismatches, 0, 0.0))
    return checks


def exhaustive_threshold(rho: float, tau: float) -> int:
    """Smallest t with 1 - (1 - rho)^t >= tau, by direct search."""
    t = 1
    while 1.0 - (1.0 - rho) ** t < tau:
        t += 1
    return t


def acceptance_suite(seed: int, trials: int, workers: int = 1, analytic_offset: float = 0.0) -> List[CheckResult]:
    checks: List[CheckResult] = []
    # one trial stays one round so the spread is left unestimated, as in the other suites
    rounds = trials * ACCEPTANCE_ROUNDS_FACTOR if trials > 1 else 1
    for gamma in ACCEPTANCE_GAMMAS:
        for alpha in ACCEPTANCE_ALPHAS:
            expected = speculation.sigma_from_alpha(alpha, gamma) * (gamma + 1) + analytic_offset
            est = mc_oracle.simulate_acceptance(alpha, gamma, rounds, seed=seed, workers=workers)
            checks.append(_check("acceptance", f"tokens[alpha={alpha},gamma={gamma}]", est.mean, expected,
                                 _mc_tolerance(est.std_error, expected)))
    for gamma in ACCEPTANCE_GAMMAS:
        sigma = speculation.sigma_from_alpha(0.8, gamma)
        checks.append(_check("acceptance", f"alpha_inversion[gamma={gamma}]",
                             speculation.alpha_from_sigma(sigma, gamma), 0.8, 1e-9))
    return checks


def roofline_suite(seed: int) -> List[CheckResult]:
    checks: List[CheckResult] = []
    rng = np.random.default_rng(seed)
    worst_value = 0.0
    worst_slope = 0.0
    for _ in range(CONTINUITY_DRAWS):
        lam = rng.uniform(0.2, 1.0)
        ridge = rng.uniform(10.0, 300.0)
        s = rng.uniform(1.0 + 1e-3, 2.0)
        transition = float(lam * ridge)
        left = roofline.growth_curve(np.nextafter(transition, 0.0), transition, s)
        right = roofline.growth_curve(np.nextafter(transition, math.inf), transition, s)
        worst_value = max(worst_value, abs(left - right) / right)
        h = 1e-6 * transition
        at = roofline.growth_curve(transition, transition, s)
        slope_left = (at - roofline.growth_curve(transition - h, transition, s)) / h
        slope_right = (roofline.growth_curve(transition + h, transition, s) - at) / h
        worst_slope = max(worst_slope, abs(slope_left - slope_right) / slope_right)
    checks.append(_check("roofline", "growth_continuity_value", worst_value, 0.0, 1e-9))
    checks.append(_check("roofline", "growth_continuity_slope", worst_slope, 0.0, 1e-3))

    for T in MONOTONICITY_TOKENS:
        loads = [expert_stats.mean_expert_load(rho, T) for rho in MONOTONICITY_RHOS]
        log_f = [expert_stats.log_load_gradient_bound(rho, T) for rho in MONOTONICITY_RHOS]
        checks.append(_holds("roofline", f"load_increasing_in_rho[T={T}]",
                             all(b > a for a, b in zip(loads, loads[1:]))))
        checks.append(_holds("roofline", f"gradient_bound_below_one[T={T}]", all(v < 0.0 for v in log_f)))
        checks.append(_holds("roofline", f"gradient_bound_decreasing[T={T}]",
                             all(b < a for a, b in zip(log_f, log_f[1:]))))

    checks.append(_holds("roofline", "classify_memory_bound", roofline.classify_boundness(8.0, 16.0) == "memory-bound"))
    checks.append(_holds("roofline", "classify_compute_bound", roofline.classify_boundness(32.0, 16.0) == "compute-bound"))
    return checks


def reference_fit_inputs():
    """Hardware, volumes, true parameters and grid of the reference calibration scenario."""
    return (
        HardwareSpec(**REFERENCE_HARDWARE),
        VolumeSpec(**REFERENCE_VOLUMES),
        CostParams(**REFERENCE_PARAMS),
        SynthesisGrid(**DEFAULT_GRID),
    )


def fit_suite(seed: int, workers: int = 1) -> List[CheckResult]:
    hw, vol, truth, grid = reference_fit_inputs()
    clean = calibration_service.synthesize_measurements(truth, hw, grid, REFERENCE_ACCEPTANCE, noise=0.0, seed=seed)
    bounds = calibration_service.default_bounds(vol, hw, clean, REFERENCE_REJECT_CEILING)
    config = FitConfig(seed=seed, workers=workers)

    checks = [_check("fit", "grid_size", len(clean), grid.size, 0.0)]
    checks.append(_check("fit", "objective_at_truth", calibration_service.objective(truth, clean, hw), 0.0, 1e-20))

    subset = calibration_service.stride_select(clean, stride=11)
    checks.append(_check("fit", "stride_subset_size", len(subset), 21, 0.0))
    result = calibration_service.fit(subset, bounds, hw, config)
    predicted = calibration_service.predict_measurements(result.params, clean, hw)
    observed = np.array([m.speedup for m in clean])
    checks.append(_check("fit", "noiseless_max_relative_error",
                         float(np.max(np.abs(predicted - observed) / observed)), 0.0, 0.01))
    checks.append(_check("fit", "noiseless_mse", float(np.mean((predicted - observed) ** 2)), 0.0, 1e-4))
    checks.append(_holds("fit", "params_within_bounds", bounds.contains(result.params)))

    noisy = calibration_service.synthesize_measurements(truth, hw, grid, REFERENCE_ACCEPTANCE, noise=0.01, seed=seed)
    noisy_obs = np.array([m.speedup for m in noisy])
    floor = float(np.mean((noisy_obs - observed) ** 2))
    noisy_fit = calibration_service.fit(noisy, bounds, hw, config)
    noisy_mse = calibration_service.mean_squared_error(noisy_fit.params, noisy, hw)
    checks.append(_check("fit", "noisy_mse_within_3x_floor", noisy_mse, 0.0, 3.0 * floor))
    return checks


def model_suite() -> List[CheckResult]:
    checks: List[CheckResult] = []
    hw = HardwareSpec(**TREND_HARDWARE)
    arch = MoEArch(total_experts=64, active_per_token=8)

    ffn = CostParams(**FFN_DOMINATED_PARAMS)
    checks.append(_check("model", "target_efficiency[gamma=1]",
                         cost_model.target_efficiency(ffn, arch, hw, 16, 1), 1.0, 0.0))

    linear = CostParams(**{**FFN_DOMINATED_PARAMS, "bias": 0.0, "k1": 1.0, "k2": 0.0, "k3": 0.0})
    for gamma in (2, 3, 4):
        checks.append(_check("model", f"target_efficiency_compute_bound[gamma={gamma}]",
                             cost_model.target_efficiency(linear, arch, hw, 1024, gamma),
                             1.0 / gamma, 0.02 / gamma))

    saturated = CostParams(**{**FFN_DOMINATED_PARAMS, "bias": 0.01, "k1": 0.001, "k2": 1.0, "k3": 0.001, "s": 1.01})
    threshold = expert_stats.full_activation_threshold(arch)
    for batch in (threshold, 32, 64, 128):
        te = cost_model.target_efficiency(saturated, arch, hw, batch, 3)
        checks.append(_holds("model", f"target_efficiency_saturated[B={batch}]", te >= 0.95))

    batches = list(range(1, 129))
    peaks: List[int] = []
    widths: List[int] = []
    for k in (16, 8, 4):
        sweep = cost_model.sweep_batch(ffn, arch.with_active(k), hw, 3, 0.9, batches)
        checks.append(_holds("model", f"ffn_sweep_unimodal[K={k}]", cost_model.is_unimodal(sweep.speedups)))
        peaks.append(sweep.peak_batch)
        widths.append(sweep.robust_width)
    checks.append(_holds("model", "peak_batch_grows_as_K_shrinks", peaks == sorted(peaks)))
    checks.append(_holds("model", "robust_range_widens_as_K_shrinks", widths == sorted(widths)))

    attention = CostParams(**ATTENTION_DOMINATED_PARAMS)
    for k in (1, 2):
        sweep = cost_model.sweep_batch(attention, arch.with_active(k), hw, 3, 0.9, batches)
        checks.append(_holds("model", f"attention_sweep_nonincreasing[K={k}]",
                             all(b <= a for a, b in zip(sweep.speedups, sweep.speedups[1:]))))

    for t_ar, t_sd, published in PUBLISHED_TOKEN_TIMES:
        checks.append(_check("model", f"table_ratio[{t_ar}/{t_sd}]",
                             cost_model.speedup_from_token_times(t_ar, t_sd), published, 0.01))
    return checks


# --------------------------- Runner --------------------------- #

def _selected(selector: str) -> List[str]:
    if selector == "all":
        return list(SUITES)
    if selector not in SUITES:
        raise ValueError(f"unknown suite {selector!r}; choose from all, {', '.join(SUITES)}")
    return [selector]


def run_suites(
    selector: str = "all",
    seed: int = 0,
    trials: int = 100_000,
    workers: int = 1,
    analytic_offset: float = 0.0,
) -> SuiteReport:
    """
    Run the selected suites.

    `analytic_offset` is added to every analytic expectation compared against
    simulation; a nonzero value must make the activation and acceptance suites
    fail.
    """
    runners: Dict[str, Callable[[], Iterable[CheckResult]]] = {
        "activation": lambda: activation_suite(seed, trials, workers, analytic_offset),
        "acceptance": lambda: acceptance_suite(seed, trials, workers, analytic_offset),
        "roofline": lambda: roofline_suite(seed),
        "fit": lambda: fit_suite(seed, workers),
        "model": model_suite,
    }
    checks: List[CheckResult] = []
    for name in _selected(selector):
        logger.info("Running %s suite", name)
        suite_checks = list(runners[name]())
        failed = sum(1 for c in suite_checks if not c.passed)
        if failed:
            logger.warning("%s suite: %s of %s checks failed", name, failed, len(suite_checks))
        checks.extend(suite_checks)
    return SuiteReport(checks=checks)
