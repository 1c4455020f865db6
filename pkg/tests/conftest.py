"""Shared fixtures for the moesd test suite."""

from __future__ import annotations

import pytest

from moesd.core.presets import (
    ATTENTION_DOMINATED_PARAMS,
    FFN_DOMINATED_PARAMS,
    REFERENCE_HARDWARE,
    REFERENCE_PARAMS,
    REFERENCE_VOLUMES,
    TREND_HARDWARE,
)
from moesd.core.schemas import CostParams, HardwareSpec, MoEArch, VolumeSpec


def make_params(**overrides) -> CostParams:
    """Zero time coefficients unless overridden; lambda=0.5, s=1.5."""
    values = {
        "bias": 0.0, "k1": 0.0, "k2": 0.0, "k3": 0.0,
        "draft_bias": 0.0, "draft_k": 0.0, "reject_bias": 0.0, "reject_k": 0.0,
        "lambda": 0.5, "s": 1.5,
    }
    values.update(overrides)
    return CostParams(**values)


@pytest.fixture
def qwen2() -> MoEArch:
    return MoEArch(total_experts=64, active_per_token=8, label="Qwen2-57B-A14B")


@pytest.fixture
def trend_hw() -> HardwareSpec:
    """Ridge point 16."""
    return HardwareSpec(**TREND_HARDWARE)


@pytest.fixture
def ffn_params() -> CostParams:
    return CostParams(**FFN_DOMINATED_PARAMS)


@pytest.fixture
def attention_params() -> CostParams:
    return CostParams(**ATTENTION_DOMINATED_PARAMS)


@pytest.fixture
def reference_hw() -> HardwareSpec:
    return HardwareSpec(**REFERENCE_HARDWARE)


@pytest.fixture
def reference_vol() -> VolumeSpec:
    return VolumeSpec(**REFERENCE_VOLUMES)


@pytest.fixture
def reference_params() -> CostParams:
    return CostParams(**REFERENCE_PARAMS)
