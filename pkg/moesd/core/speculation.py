"""
Acceptance-rate arithmetic for chain speculation.

The target accepts drafted tokens one by one with independent probability
alpha and always emits one bonus token, so a round of draft length gamma yields
(1 - alpha^(gamma+1)) / (1 - alpha) tokens on average.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from scipy.optimize import bisect

from .errors import ModelDomainError

if TYPE_CHECKING:
    from .schemas import SpecConfig

_INVERSION_XTOL = 1e-12


def _check_gamma(gamma: int) -> int:
    if int(gamma) != gamma or gamma < 1:
        raise ModelDomainError(f"draft length must be a positive integer, got {gamma}")
    return int(gamma)


def sigma_from_alpha(alpha: float, gamma: int) -> float:
    """Yield ratio sigma: expected tokens per round over the maximum gamma + 1."""
    gamma = _check_gamma(gamma)
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ModelDomainError(f"acceptance rate must lie in [0, 1], got {alpha}")
    if alpha == 1.0:
        return 1.0
    return (1.0 - alpha ** (gamma + 1)) / (1.0 - alpha) / (gamma + 1)


def alpha_from_sigma(sigma: float, gamma: int) -> float:
    """Invert sigma_from_alpha by bisection on [0, 1]; the map is strictly increasing."""
    gamma = _check_gamma(gamma)
    sigma = float(sigma)
    floor = 1.0 / (gamma + 1)
    if sigma < floor - 1e-12 or sigma > 1.0 + 1e-12:
        raise ModelDomainError(f"yield {sigma} outside attainable range [{floor}, 1] for gamma={gamma}")
    if sigma <= floor:
        return 0.0
    if sigma >= 1.0:
        return 1.0
    return bisect(lambda a: sigma_from_alpha(a, gamma) - sigma, 0.0, 1.0, xtol=_INVERSION_XTOL, maxiter=200)


def expected_tokens_per_round(cfg: "SpecConfig") -> float:
    """Average tokens emitted per round, sigma * (gamma + 1)."""
    return cfg.sigma * (cfg.draft_length + 1)


def normalize_speedup(speedup: float, sigma: float, reference_sigma: float) -> float:
    """
    Rescale a measured speedup to a reference yield.

    Speedup is proportional to sigma, so multiplying by reference_sigma / sigma
    removes acceptance differences between runs (e.g. when K is varied without
    retraining) and leaves only the systemic part.
    """
    if sigma <= 0.0 or reference_sigma <= 0.0:
        raise ModelDomainError("yields must be positive")
    return speedup * (reference_sigma / sigma)
