"""Closed-form expert activation statistics."""

from __future__ import annotations

import math

import numpy as np
import pytest

from moesd.core.errors import ModelDomainError
from moesd.core.expert_stats import (
    activated_experts_array,
    activation_probability,
    expected_activated_experts,
    full_activation_threshold,
    is_saturated,
    load_gradient_bound,
    log_load_gradient_bound,
    mean_expert_load,
)
from moesd.core.schemas import ActivationQuery, MoEArch

EXPERT_COUNTS = (8, 16, 32, 60, 62, 64, 128, 256)


class TestActivationProbability:
    """1 - (1 - rho)^t."""

    def test_qwen2_sixteen_tokens(self, qwen2: MoEArch) -> None:
        assert activation_probability(qwen2, 16) == pytest.approx(0.8819329130, abs=1e-9)

    def test_single_token_is_sparsity(self, qwen2: MoEArch) -> None:
        assert activation_probability(qwen2, 1) == pytest.approx(0.125, rel=1e-12)

    def test_dense_model_always_active(self) -> None:
        dense = MoEArch(total_experts=8, active_per_token=8)
        assert activation_probability(dense, 1) == 1.0
        assert activation_probability(1.0, 37) == 1.0

    def test_array_input_keeps_shape(self, qwen2: MoEArch) -> None:
        out = activation_probability(qwen2, np.array([1, 2, 4, 8]))
        assert out.shape == (4,)
        assert np.all(np.diff(out) > 0)

    @pytest.mark.parametrize("t", [0, -1, 0.5, float("nan")])
    def test_rejects_fewer_than_one_token(self, qwen2: MoEArch, t: float) -> None:
        with pytest.raises(ModelDomainError):
            activation_probability(qwen2, t)

    @pytest.mark.parametrize("rho", [0.0, -0.1, 1.5])
    def test_rejects_sparsity_out_of_range(self, rho: float) -> None:
        with pytest.raises(ModelDomainError):
            activation_probability(rho, 4)


class TestExpectedActivatedExperts:
    def test_single_token_activates_k(self) -> None:
        arch = MoEArch(total_experts=62, active_per_token=6)
        assert expected_activated_experts(arch, 1) == pytest.approx(6.0, rel=1e-12)

    def test_qwen15_sixty_tokens(self) -> None:
        arch = MoEArch(total_experts=60, active_per_token=4)
        assert expected_activated_experts(arch, 60) == pytest.approx(59.0442201998, abs=1e-8)

    def test_dense_returns_all_experts(self) -> None:
        dense = MoEArch(total_experts=64, active_per_token=64)
        assert expected_activated_experts(dense, 1) == 64.0

    @pytest.mark.parametrize("total", EXPERT_COUNTS)
    def test_single_token_is_exactly_k(self, total: int) -> None:
        for k in range(1, total + 1):
            arch = MoEArch(total_experts=total, active_per_token=k)
            assert expected_activated_experts(arch, 1) == float(k), (total, k)
            assert activation_probability(arch, 1) == k / total
        ks = np.arange(1, total + 1)
        assert np.array_equal(activated_experts_array(total, ks, 1), ks.astype(float))

    def test_saturates_below_total(self, qwen2: MoEArch) -> None:
        values = expected_activated_experts(qwen2, np.arange(1, 513))
        assert np.all(values <= 64.0)
        assert np.all(np.diff(values) >= 0.0)
        assert values[-1] == pytest.approx(64.0, abs=1e-9)

    @pytest.mark.parametrize("total, active", [(64, 8), (60, 4), (62, 6), (8, 2), (256, 1), (16, 15)])
    def test_strictly_increasing_while_resolvable(self, total: int, active: int) -> None:
        # until the miss probability drops to 1e-10 the steps stay far above one ulp of E
        arch = MoEArch(total_experts=total, active_per_token=active)
        t_max = int(math.log(1e-10) / math.log1p(-arch.sparsity))
        values = expected_activated_experts(arch, np.arange(1, t_max + 1))
        assert values[0] == active
        assert np.all(np.diff(values) > 0.0)
        assert np.all(values < total)

    def test_needs_full_arch(self) -> None:
        with pytest.raises(ModelDomainError):
            expected_activated_experts(0.125, 4)

    def test_vectorized_helper_matches_scalar(self, qwen2: MoEArch) -> None:
        tokens = np.array([1.0, 3.0, 16.0, 200.0])
        vec = activated_experts_array(64, 8, tokens)
        scalar = [expected_activated_experts(qwen2, t) for t in tokens]
        assert vec == pytest.approx(scalar, rel=1e-14)

    def test_vectorized_helper_broadcasts_architectures(self) -> None:
        out = activated_experts_array(np.array([64, 64]), np.array([8, 64]), 4)
        assert out[1] == 64.0
        assert out[0] < 32.0

    def test_vectorized_helper_rejects_k_above_e(self) -> None:
        with pytest.raises(ModelDomainError):
            activated_experts_array(8, 9, 1)


class TestFullActivationThreshold:
    """Smallest t reaching a tau share of the experts."""

    def test_qwen2(self, qwen2: MoEArch) -> None:
        assert full_activation_threshold(qwen2, 0.95) == 23

    def test_qwen15(self) -> None:
        assert full_activation_threshold(MoEArch(total_experts=60, active_per_token=4), 0.95) == 44

    @pytest.mark.parametrize("rho, expected", [(0.125, 23), (4 / 60, 44)])
    def test_bare_sparsity(self, rho: float, expected: int) -> None:
        assert full_activation_threshold(rho, 0.95) == expected

    def test_dense_is_one(self) -> None:
        assert full_activation_threshold(MoEArch(total_experts=4, active_per_token=4)) == 1

    def test_matches_exhaustive_search(self) -> None:
        rng = np.random.default_rng(7)
        for _ in range(200):
            rho = float(rng.uniform(0.01, 0.99))
            tau = float(rng.uniform(0.05, 0.99))
            t = 1
            while 1.0 - (1.0 - rho) ** t < tau:
                t += 1
            assert full_activation_threshold(rho, tau) == t, (rho, tau)

    @pytest.mark.parametrize("total", EXPERT_COUNTS)
    @pytest.mark.parametrize("tau", [0.5, 0.9, 0.95, 0.99])
    def test_brackets_expected_activation(self, total: int, tau: float) -> None:
        for k in range(1, total):
            arch = MoEArch(total_experts=total, active_per_token=k)
            t = full_activation_threshold(arch, tau)
            assert expected_activated_experts(arch, t) >= tau * total, (k, t)
            if t > 1:
                assert expected_activated_experts(arch, t - 1) < tau * total, (k, t)

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.5])
    def test_rejects_tau_outside_open_interval(self, qwen2: MoEArch, tau: float) -> None:
        with pytest.raises(ModelDomainError):
            full_activation_threshold(qwen2, tau)


class TestIsSaturated:
    def test_threshold_is_the_boundary(self, qwen2: MoEArch) -> None:
        assert not is_saturated(qwen2, ActivationQuery(token_count=22))
        assert is_saturated(qwen2, ActivationQuery(token_count=23))
        assert is_saturated(qwen2, ActivationQuery(token_count=512))

    def test_follows_saturation_ratio(self, qwen2: MoEArch) -> None:
        query = ActivationQuery(token_count=23, saturation_ratio=0.99)
        assert not is_saturated(qwen2, query)
        assert is_saturated(qwen2, ActivationQuery(token_count=full_activation_threshold(qwen2, 0.99),
                                                   saturation_ratio=0.99))

    def test_dense_saturates_at_one_token(self) -> None:
        assert is_saturated(MoEArch(total_experts=8, active_per_token=8), ActivationQuery(token_count=1))


class TestMeanExpertLoad:
    def test_sparse_example(self) -> None:
        assert mean_expert_load(0.125, 32) == pytest.approx(4.0565476127, abs=1e-9)

    def test_dense_equals_tokens(self) -> None:
        assert mean_expert_load(1.0, 12) == 12.0

    def test_single_token_is_one(self, qwen2: MoEArch) -> None:
        assert mean_expert_load(qwen2, 1) == pytest.approx(1.0, rel=1e-12)

    def test_bounded_by_one_and_t(self) -> None:
        tokens = np.arange(1, 300)
        for rho in (0.02, 0.125, 0.5, 0.9):
            load = mean_expert_load(rho, tokens)
            assert np.all(load >= 1.0)
            assert np.all(load <= tokens)

    def test_increasing_in_sparsity(self) -> None:
        rhos = np.linspace(0.01, 0.99, 50)
        for T in (2, 16, 256, 1024):
            loads = [mean_expert_load(float(r), T) for r in rhos]
            assert all(b > a for a, b in zip(loads, loads[1:]))


class TestLoadGradientBound:
    def test_value(self) -> None:
        assert load_gradient_bound(0.1, 10) == pytest.approx(0.9 ** 9 * 1.9, rel=1e-12)

    def test_half_sparsity_two_tokens(self) -> None:
        assert load_gradient_bound(0.5, 2) == pytest.approx(0.75, rel=1e-12)

    @pytest.mark.parametrize("T", [2, 10, 1000])
    def test_tends_to_one_as_sparsity_vanishes(self, T: int) -> None:
        assert load_gradient_bound(1e-12, T) == pytest.approx(1.0, abs=1e-9)
        assert load_gradient_bound(1e-4, T) < 1.0

    def test_log_matches_value(self) -> None:
        assert log_load_gradient_bound(0.1, 10) == pytest.approx(math.log(0.9 ** 9 * 1.9), rel=1e-12)

    def test_below_one_and_decreasing(self) -> None:
        rhos = np.linspace(0.01, 0.99, 50)
        for T in (2, 4, 64, 1024):
            logs = [log_load_gradient_bound(float(r), T) for r in rhos]
            assert all(v < 0.0 for v in logs)
            assert all(b < a for a, b in zip(logs, logs[1:]))

    def test_log_form_survives_underflow(self) -> None:
        assert load_gradient_bound(0.99, 1024) == 0.0
        assert math.isfinite(log_load_gradient_bound(0.99, 1024))

    @pytest.mark.parametrize("rho, T", [(0.0, 4), (1.0, 4), (0.5, 1.0)])
    def test_rejects_degenerate_inputs(self, rho: float, T: float) -> None:
        with pytest.raises(ModelDomainError):
            load_gradient_bound(rho, T)
