"""End-to-end runs of the moesd command line."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from moesd.cli.modeling_cli import main, parse_int_list
from moesd.core import cost_model
from moesd.core.errors import ConfigError
from moesd.core.presets import HARDWARE, MOE_ARCHITECTURES, REFERENCE_PARAMS
from moesd.core.schemas import (
    CalibrationProfile,
    CostParams,
    HardwareSpec,
    MoEArch,
    ParamBounds,
    ResidualSummary,
    SpecConfig,
)
from moesd.services.data_service import DataService

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
TREND = str(DATA_DIR / "scenario_trend.json")
REFERENCE = str(DATA_DIR / "scenario_reference.json")


def _key_values(text: str) -> Dict[str, str]:
    pairs = (line.split(": ", 1) for line in text.strip().splitlines())
    return {key: value for key, value in pairs}


def _truth_profile(path: Path, reference_hw: HardwareSpec) -> Path:
    profile = CalibrationProfile(
        params=CostParams(**REFERENCE_PARAMS),
        bounds=ParamBounds(bounds={
            "bias": (0.0, math.inf), "k1": (0.0, math.inf), "k2": (0.0, math.inf), "k3": (0.0, math.inf),
            "draft_bias": (0.0, math.inf), "draft_k": (0.0, math.inf), "reject_bias": (0.0, math.inf),
            "reject_k": (0.0, math.inf), "lambda": (0.2, 1.0), "s": (1.0, 2.0),
        }),
        objective=0.0,
        mse=0.0,
        residual_summary=ResidualSummary(max_abs=0.0, mean_abs=0.0, rms=0.0),
        seed=0,
        converged=True,
        iterations=0,
        variant="alg1",
        hardware=reference_hw,
        total_experts=64,
        spec=SpecConfig(draft_length=4, acceptance_rate=0.8),
        measurement_count=0,
    )
    return DataService(str(path.parent)).save_profile(path, profile)


class TestParseIntList:
    def test_inclusive_range(self) -> None:
        assert parse_int_list("1:5") == [1, 2, 3, 4, 5]

    def test_stepped_range(self) -> None:
        assert parse_int_list("1:128:32") == [1, 33, 65, 97]

    def test_comma_list(self) -> None:
        assert parse_int_list("11, 15,25") == [11, 15, 25]

    @pytest.mark.parametrize("text", ["10:1", "", "3,2", "1:x", "1:5:0", "4,4"])
    def test_rejects_bad_ranges(self, text: str) -> None:
        with pytest.raises(ConfigError):
            parse_int_list(text)


class TestPredict:
    def test_matches_library(self, capsys, ffn_params, qwen2, trend_hw) -> None:
        assert main(["predict", "--config", TREND, "--batch", "32", "--full-precision"]) == 0
        out = _key_values(capsys.readouterr().out)
        spec = SpecConfig(draft_length=3, yield_ratio=0.9)
        expected = cost_model.compute_speedup(ffn_params, qwen2, trend_hw, 32, 3, spec.sigma)
        assert out["speedup"] == repr(expected)
        assert out["threshold_tokens"] == "23"
        assert out["transition_tokens"] == "8.0"
        assert "ar.expert_loading" in out
        assert out["verify_expert_regime"] == "compute-bound"
        assert out["verify_saturated"] == "yes"

    def test_json_output(self, capsys) -> None:
        assert main(["predict", "--config", TREND, "--batch", "16", "--json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["batch_size"] == 16
        assert report["breakdown"]["n_ar"] < 64

    def test_data_dir_flag_resolves_relative_config(self, capsys) -> None:
        assert main(["--data-dir", str(DATA_DIR), "predict", "--config", "scenario_trend.json", "--batch", "4"]) == 0
        assert "speedup:" in capsys.readouterr().out

    def test_preset_flags_replace_arch_and_hardware(self, capsys, ffn_params) -> None:
        code = main(["predict", "--config", TREND, "--batch", "16", "--json",
                     "--arch", "mixtral-8x7b", "--hardware", "h100-sxm"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        arch = MoEArch(**MOE_ARCHITECTURES["mixtral-8x7b"])
        hw = HardwareSpec(**HARDWARE["h100-sxm"])
        assert report["threshold_tokens"] == 11
        assert report["transition_tokens"] == pytest.approx(0.5 * hw.ridge_point)
        assert report["breakdown"]["n_sd"] == pytest.approx(8.0, abs=1e-4)
        assert report["speedup"] == cost_model.compute_speedup(ffn_params, arch, hw, 16, 3, 0.9)

    def test_unknown_preset_exits_1(self, capsys) -> None:
        assert main(["predict", "--config", TREND, "--batch", "4", "--hardware", "tpu-v9"]) == 1

    def test_zero_batch_is_domain_error(self, capsys) -> None:
        assert main(["predict", "--config", TREND, "--batch", "0"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_exits_1(self, capsys, tmp_path: Path) -> None:
        assert main(["predict", "--config", str(tmp_path / "nope.json"), "--batch", "4"]) == 1

    def test_unknown_field_exits_1(self, capsys, tmp_path: Path) -> None:
        doc = json.loads(Path(TREND).read_text())
        doc["hw"]["peak_flops"] = 1.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        assert main(["predict", "--config", str(bad), "--batch", "4"]) == 1


class TestSweep:
    def test_writes_curve_and_is_reproducible(self, capsys, tmp_path: Path) -> None:
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["sweep", "--config", TREND, "--batches", "1:128", "--out", str(first)]) == 0
        assert main(["sweep", "--config", TREND, "--batches", "1:128", "--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

        lines = first.read_text().splitlines()
        assert lines[0] == "batch_size,speedup,target_efficiency"
        assert len(lines) == 1 + 128 + 1
        assert lines[-1].startswith("# peak_speedup=")
        assert "peak_batch=17" in lines[-1]
        assert "robust_range=[3,62]" in lines[-1]

    def test_stdout_when_no_out(self, capsys) -> None:
        assert main(["sweep", "--config", TREND, "--batches", "1,2,4"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 5
        assert lines[1].startswith("1,")

    def test_descending_range_exits_1(self, capsys) -> None:
        assert main(["sweep", "--config", TREND, "--batches", "10:1"]) == 1
        assert "empty range" in capsys.readouterr().err


class TestValidate:
    def test_model_suite(self, capsys) -> None:
        assert main(["validate", "--suite", "model"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert all(line.startswith("PASS model ") for line in out[:-1])
        passed, total = out[-1].split()[0].split("/")
        assert passed == total

    @pytest.mark.slow
    def test_activation_suite_at_defaults(self, capsys) -> None:
        assert main(["validate", "--suite", "activation"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_unknown_suite_exits_1(self, capsys) -> None:
        assert main(["validate", "--suite", "everything"]) == 1

    def test_missing_command_exits_1(self, capsys) -> None:
        assert main([]) == 1


class TestCalibrationCommands:
    def test_synth_writes_default_grid(self, capsys, tmp_path: Path, reference_hw) -> None:
        profile = _truth_profile(tmp_path / "truth.json", reference_hw)
        out = tmp_path / "m.csv"
        assert main(["synth", "--profile", str(profile), "--noise", "0.01", "--seed", "4", "--out", str(out)]) == 0
        rows = DataService(str(tmp_path)).load_measurements(out)
        assert len(rows) == 228

    def test_fit_with_too_few_measurements_exits_2(self, capsys, tmp_path: Path, reference_hw) -> None:
        profile = _truth_profile(tmp_path / "truth.json", reference_hw)
        out = tmp_path / "m.csv"
        assert main(["synth", "--profile", str(profile), "--k-values", "8", "--gammas", "2",
                     "--batch-sizes", "1:9", "--out", str(out)]) == 0
        code = main(["fit", "--measurements", str(out), "--config", REFERENCE, "--out", str(tmp_path / "p.json")])
        assert code == 2
        assert "at least 10" in capsys.readouterr().err
        assert not (tmp_path / "p.json").exists()

    def test_bad_measurement_row_exits_1(self, capsys, tmp_path: Path) -> None:
        bad = tmp_path / "m.csv"
        bad.write_text("batch_size,gamma,K,E,sigma,speedup\n1,2,8,64,1.5,1.2\n")
        code = main(["fit", "--measurements", str(bad), "--config", REFERENCE, "--out", str(tmp_path / "p.json")])
        assert code == 1
        assert f"{bad}:2:" in capsys.readouterr().err

    @pytest.mark.slow
    def test_synth_then_fit_round_trip(self, capsys, tmp_path: Path, reference_hw) -> None:
        profile = _truth_profile(tmp_path / "truth.json", reference_hw)
        measurements = tmp_path / "m.csv"
        fitted = tmp_path / "fitted.json"
        assert main(["synth", "--profile", str(profile), "--out", str(measurements)]) == 0
        code = main(["fit", "--measurements", str(measurements), "--config", REFERENCE,
                     "--stride", "11", "--starts", "4", "--workers", "2", "--out", str(fitted)])
        assert code == 0
        out = capsys.readouterr().out
        assert "measurements: 21 of 228" in out
        assert "converged: true" in out

        data = DataService(str(tmp_path))
        loaded = data.load_profile(fitted)
        assert loaded.stride == 11
        assert loaded.measurement_count == 21
        assert loaded.converged
        assert loaded.bounds.contains(loaded.params)
        assert loaded.solver["starts"] == 4

        # re-predict every synthesized row, not only the 21 the fit saw
        rows = data.load_measurements(measurements)
        predicted = cost_model.speedup_array(
            loaded.params,
            np.array([m.batch_size for m in rows]),
            np.array([m.gamma for m in rows]),
            np.array([m.K for m in rows]),
            np.array([m.E for m in rows]),
            np.array([m.sigma for m in rows]),
            reference_hw.ridge_point,
        )
        measured = np.array([m.speedup for m in rows])
        assert float(np.mean((predicted - measured) ** 2)) <= 1e-4

    def test_stride_study_csv(self, capsys, tmp_path: Path, reference_hw) -> None:
        profile = _truth_profile(tmp_path / "truth.json", reference_hw)
        measurements = tmp_path / "m.csv"
        assert main(["synth", "--profile", str(profile), "--out", str(measurements)]) == 0
        study = tmp_path / "study.csv"
        code = main(["stride-study", "--measurements", str(measurements), "--config", REFERENCE,
                     "--strides", "25,50", "--starts", "1", "--max-iterations", "30", "--out", str(study)])
        assert code == 0
        lines = study.read_text().splitlines()
        assert lines[0] == "m,stride,begin,mse,objective,converged,batch_sizes"
        assert len(lines) == 2
        assert lines[1].startswith("10,25,0,")
