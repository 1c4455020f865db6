"""Roofline helpers and the growth curve G."""

from __future__ import annotations

import math

import numpy as np
import pytest

from moesd.core.errors import ModelDomainError
from moesd.core.roofline import (
    arithmetic_intensity,
    classify_boundness,
    growth_curve,
    log_growth_curve,
)


class TestArithmeticIntensity:
    def test_ratio(self) -> None:
        assert arithmetic_intensity(312e12, 2e12) == pytest.approx(156.0)

    def test_rejects_zero_bytes(self) -> None:
        with pytest.raises(ModelDomainError):
            arithmetic_intensity(1.0, 0.0)

    @pytest.mark.parametrize(
        "intensity, expected",
        [(4.0, "memory-bound"), (16.0, "balanced"), (100.0, "compute-bound")],
    )
    def test_classify(self, intensity: float, expected: str) -> None:
        assert classify_boundness(intensity, 16.0) == expected


class TestGrowthCurve:
    """Exponential up to the transition point, tangent line after it."""

    def test_exponential_branch(self) -> None:
        assert growth_curve(50, 100, 1.01) == pytest.approx(1.01 ** 50, rel=1e-12)

    def test_linear_branch(self) -> None:
        # 1.01^100 * (1 + ln(1.01) * 50)
        assert growth_curve(150, 100, 1.01) == pytest.approx(4.0505034544, rel=1e-9)

    def test_zero_tokens_is_one(self) -> None:
        assert growth_curve(0, 8, 1.5) == 1.0

    def test_value_continuity_at_transition(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(20):
            transition = float(rng.uniform(0.2, 1.0) * rng.uniform(10.0, 300.0))
            s = float(rng.uniform(1.001, 2.0))
            left = growth_curve(np.nextafter(transition, 0.0), transition, s)
            right = growth_curve(np.nextafter(transition, math.inf), transition, s)
            assert abs(left - right) <= 1e-9 * right

    def test_slope_continuity_at_transition(self) -> None:
        rng = np.random.default_rng(4)
        for _ in range(20):
            transition = float(rng.uniform(0.2, 1.0) * rng.uniform(10.0, 300.0))
            s = float(rng.uniform(1.001, 2.0))
            h = 1e-6 * transition
            at = growth_curve(transition, transition, s)
            left = (at - growth_curve(transition - h, transition, s)) / h
            right = (growth_curve(transition + h, transition, s) - at) / h
            assert left == pytest.approx(right, rel=1e-3)

    def test_array_input(self) -> None:
        t = np.array([0.0, 4.0, 8.0, 16.0])
        out = growth_curve(t, 8.0, 1.5)
        assert out.shape == (4,)
        assert out[1] == pytest.approx(1.5 ** 4)
        assert out[3] == pytest.approx(1.5 ** 8 * (1 + math.log(1.5) * 8))

    def test_monotone_increasing(self) -> None:
        values = growth_curve(np.linspace(0, 400, 801), 60.0, 1.3)
        assert np.all(np.diff(values) > 0)

    def test_large_transition_uses_log_space(self) -> None:
        # s^transition overflows a double here
        value = growth_curve(2000.0, 1500.0, 2.0)
        assert value == pytest.approx(np.finfo(float).max)
        assert log_growth_curve(2000.0, 1500.0, 2.0) == pytest.approx(
            1500 * math.log(2.0) + math.log1p(math.log(2.0) * 500)
        )

    def test_log_cap_switch_is_seamless(self) -> None:
        direct = growth_curve(30.0, 20.0, 1.2)
        via_logs = growth_curve(30.0, 20.0, 1.2, log_cap=10.0)
        assert via_logs == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("t, transition, s", [(4, 8, 1.0), (4, 8, 0.9), (4, 0, 1.5), (-1, 8, 1.5)])
    def test_rejects_invalid_arguments(self, t: float, transition: float, s: float) -> None:
        with pytest.raises(ModelDomainError):
            growth_curve(t, transition, s)
