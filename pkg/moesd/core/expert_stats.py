"""
Closed-form expert activation statistics for a uniformly routed MoE.

Each token picks K distinct experts out of E uniformly at random, independently
of the other tokens. Functions accept a scalar token count or a numpy array of
counts and return a float or an array of the same shape.
"""

import math
from typing import Union

import numpy as np

from .errors import ModelDomainError
from .presets import DEFAULT_SATURATION_RATIO
from .schemas import ActivationQuery, MoEArch

ArchLike = Union[MoEArch, float]


def _sparsity(arch: ArchLike) -> float:
    if isinstance(arch, MoEArch):
        return arch.sparsity
    rho = float(arch)
    if not 0.0 < rho <= 1.0:
        raise ModelDomainError(f"sparsity must lie in (0, 1], got {rho}")
    return rho


def _tokens(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr < 1.0):
        raise ModelDomainError(f"token count must be >= 1, got {t!r}")
    return arr


def _out(arr: np.ndarray):
    return float(arr) if np.ndim(arr) == 0 else arr


def _miss_probability(rho: float, t: np.ndarray) -> np.ndarray:
    """(1 - rho)^t evaluated as exp(t * log1p(-rho))."""
    if rho >= 1.0:
        return np.zeros_like(t)
    return np.exp(t * math.log1p(-rho))


def activation_probability(arch: ArchLike, t):
    """Probability that a given expert is activated by at least one of t tokens."""
    rho = _sparsity(arch)
    tokens = _tokens(t)
    if rho >= 1.0:
        return _out(np.ones_like(tokens))
    # a single token activates exactly K of E experts
    return _out(np.where(tokens == 1.0, rho, -np.expm1(tokens * math.log1p(-rho))))


def expected_activated_experts(arch: MoEArch, t):
    """N(t) = E * (1 - ((E - K) / E)^t), exactly K at t = 1."""
    if not isinstance(arch, MoEArch):
        raise ModelDomainError("expected_activated_experts needs a full MoEArch (E and K)")
    tokens = _tokens(t)
    n = arch.total_experts * np.asarray(activation_probability(arch, tokens))
    return _out(np.where(tokens == 1.0, float(arch.active_per_token), n))


def is_saturated(arch: MoEArch, query: ActivationQuery) -> bool:
    """True when query.token_count tokens activate at least saturation_ratio * E experts on average."""
    return query.token_count >= full_activation_threshold(arch, query.saturation_ratio)


def activated_experts_array(total_experts, active_per_token, t) -> np.ndarray:
    """Vectorized N(t) over arrays of E, K and t (broadcast together)."""
    total = np.asarray(total_experts, dtype=float)
    active = np.asarray(active_per_token, dtype=float)
    if np.any(active < 1.0) or np.any(active > total):
        raise ModelDomainError("need 1 <= K <= E for every entry")
    tokens = _tokens(t)
    with np.errstate(divide="ignore"):
        log_miss = np.log1p(-active / total)
    n = total * -np.expm1(tokens * log_miss)
    return np.where(tokens == 1.0, active, n)


def full_activation_threshold(arch: ArchLike, tau: float = DEFAULT_SATURATION_RATIO) -> int:
    """
    Smallest integer token count t whose expected activation reaches tau.

    For a MoEArch the test is N(t) >= tau * E; for a bare sparsity ratio it is
    the equivalent activation probability >= tau. A dense model returns 1.
    """
    if not 0.0 < tau < 1.0:
        raise ModelDomainError(f"saturation ratio must lie in (0, 1), got {tau}")
    rho = _sparsity(arch)
    if rho >= 1.0:
        return 1

    if isinstance(arch, MoEArch):
        target = tau * arch.total_experts

        def reached(t: int) -> bool:
            return expected_activated_experts(arch, t) >= target
    else:
        def reached(t: int) -> bool:
            return activation_probability(rho, t) >= tau

    guess = max(1, math.ceil(math.log1p(-tau) / math.log1p(-rho)))
    # the closed form can land one off at exact boundaries
    while guess > 1 and reached(guess - 1):
        guess -= 1
    while not reached(guess):
        guess += 1
    return guess


def mean_expert_load(arch: ArchLike, t):
    """Average tokens processed per activated expert, rho*t / (1 - (1-rho)^t)."""
    rho = _sparsity(arch)
    tokens = _tokens(t)
    if rho >= 1.0:
        return _out(tokens.copy())
    hit = -np.expm1(tokens * math.log1p(-rho))
    return _out(np.clip(rho * tokens / hit, 1.0, tokens))


def load_gradient_bound(rho: float, T: float) -> float:
    """F(rho; T) = (1-rho)^(T-1) * (rho*T + 1 - rho); below 1 for every T > 1."""
    rho, T = _check_gradient_args(rho, T)
    return math.exp((T - 1.0) * math.log1p(-rho)) * (rho * T + 1.0 - rho)


def log_load_gradient_bound(rho: float, T: float) -> float:
    """log F(rho; T), free of the underflow F hits for large T."""
    rho, T = _check_gradient_args(rho, T)
    return (T - 1.0) * math.log1p(-rho) + math.log(rho * T + 1.0 - rho)


def _check_gradient_args(rho: float, T: float):
    rho = float(rho)
    T = float(T)
    if not 0.0 < rho < 1.0:
        raise ModelDomainError(f"rho must lie in (0, 1), got {rho}")
    if not T > 1.0:
        raise ModelDomainError(f"T must exceed 1, got {T}")
    return rho, T
