"""
Monte Carlo oracles for the closed-form expert and acceptance statistics.

The oracles simulate the generative assumptions directly (top-K routing with
distinct experts, Bernoulli acceptance of drafted tokens) and never call into
the analytic modules, so agreement between the two is meaningful.

Trials are split into blocks whose size depends only on the inputs. Block i
draws from PCG64 seeded by SeedSequence(seed, spawn_key=(i,)), and block
statistics are merged in block order, so estimates do not depend on how many
workers run the blocks.
"""

from __future__ import annotations

import logging
import math
from functools import partial
from typing import Callable, List, Tuple

import numpy as np

from ..core.errors import ModelDomainError
from ..core.schemas import McEstimate, MoEArch
from .parallel import gather_in_threads

logger = logging.getLogger(__name__)

ALGORITHM = "PCG64"
_BLOCK_BUDGET = 2 ** 22  # random draws per block

# (count, mean, sum of squared deviations)
_Moments = Tuple[int, float, float]


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _moments(values: np.ndarray) -> _Moments:
    mean = float(values.mean())
    return len(values), mean, float(np.sum((values - mean) ** 2))


def _merge(parts: List[_Moments]) -> _Moments:
    """Pairwise combination of block moments (Chan et al.), left to right."""
    n, mean, m2 = parts[0]
    for n_b, mean_b, m2_b in parts[1:]:
        total = n + n_b
        delta = mean_b - mean
        mean = mean + delta * n_b / total
        m2 = m2 + m2_b + delta * delta * n * n_b / total
        n = total
    return n, mean, m2


def _estimate(parts: List[_Moments], seed: int) -> McEstimate:
    n, mean, m2 = _merge(parts)
    if n < 2:
        std_error = math.inf
    else:
        std_error = math.sqrt(max(m2, 0.0) / (n - 1)) / math.sqrt(n)
    return McEstimate(mean=mean, std_error=std_error, trials=n, seed=seed, algorithm=ALGORITHM)


def _block_moments(job, seed: int, index: int, size: int) -> _Moments:
    return _moments(job(_block_rng(seed, index), size))


def _run_blocks(trials: int, per_block: int, job: Callable[[np.random.Generator, int], np.ndarray],
                seed: int, workers: int) -> McEstimate:
    sizes = [per_block] * (trials // per_block)
    if trials % per_block:
        sizes.append(trials % per_block)
    jobs = [partial(_block_moments, job, seed, i, size) for i, size in enumerate(sizes)]
    parts = gather_in_threads(jobs, workers=workers)
    logger.debug("merged %s blocks (%s trials, seed %s)", len(parts), trials, seed)
    return _estimate(parts, seed)


def _check_counts(trials: int, tokens: int = 1) -> None:
    if int(trials) != trials or trials < 1:
        raise ModelDomainError(f"trials must be a positive integer, got {trials}")
    if int(tokens) != tokens or tokens < 1:
        raise ModelDomainError(f"token count must be a positive integer, got {tokens}")


# --------------------------- Routing --------------------------- #

def _route_distinct(rng: np.random.Generator, total: int, active: int, tokens: int, trials: int) -> np.ndarray:
    """
    Distinct experts hit per trial when each of `tokens` tokens picks `active`
    distinct experts out of `total` (partial Fisher-Yates per token).
    """
    rows = trials * tokens
    dtype = np.int16 if total <= np.iinfo(np.int16).max else np.int32
    perm = np.tile(np.arange(total, dtype=dtype), (rows, 1))
    row = np.arange(rows)
    for j in range(active):
        pick = j + rng.integers(0, total - j, size=rows)
        current = perm[row, j].copy()
        perm[row, j] = perm[row, pick]
        perm[row, pick] = current
    hit = np.zeros((trials, total), dtype=bool)
    hit[(row // tokens)[:, None], perm[:, :active]] = True
    return hit.sum(axis=1).astype(float)


def _routing_block_size(arch: MoEArch, tokens: int) -> int:
    return max(1, _BLOCK_BUDGET // (arch.total_experts * tokens))


def simulate_activation(arch: MoEArch, t: int, trials: int, seed: int = 0, workers: int = 1) -> McEstimate:
    """Mean number of distinct experts activated by `t` routed tokens."""
    _check_counts(trials, t)
    t = int(t)

    def job(rng: np.random.Generator, size: int) -> np.ndarray:
        return _route_distinct(rng, arch.total_experts, arch.active_per_token, t, size)

    return _run_blocks(int(trials), _routing_block_size(arch, t), job, seed, workers)


def simulate_expert_load(arch: MoEArch, t: int, trials: int, seed: int = 0, workers: int = 1) -> McEstimate:
    """
    Mean of t*K / (distinct experts hit) over trials.

    This estimates E[tK/N], which sits slightly above the ratio tK/E[N] used
    by the analytic load; the gap is small for the sizes validated here.
    """
    _check_counts(trials, t)
    t = int(t)
    routed = t * arch.active_per_token

    def job(rng: np.random.Generator, size: int) -> np.ndarray:
        return routed / _route_distinct(rng, arch.total_experts, arch.active_per_token, t, size)

    return _run_blocks(int(trials), _routing_block_size(arch, t), job, seed, workers)


# --------------------------- Acceptance --------------------------- #

def simulate_acceptance(alpha: float, gamma: int, rounds: int, seed: int = 0, workers: int = 1) -> McEstimate:
    """Mean tokens emitted per speculation round: accepted prefix plus one bonus token."""
    _check_counts(rounds)
    if not 0.0 <= alpha <= 1.0:
        raise ModelDomainError(f"acceptance rate must lie in [0, 1], got {alpha}")
    if int(gamma) != gamma or gamma < 1:
        raise ModelDomainError(f"draft length must be a positive integer, got {gamma}")
    gamma = int(gamma)

    def job(rng: np.random.Generator, size: int) -> np.ndarray:
        accepted = rng.random((size, gamma)) < alpha
        return np.cumprod(accepted, axis=1).sum(axis=1) + 1.0

    return _run_blocks(int(rounds), max(1, _BLOCK_BUDGET // gamma), job, seed, workers)
