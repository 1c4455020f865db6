"""
Command-line entrypoint for moesd.

Usage:
    python moesd_cli.py predict --config data/scenario_qwen2.json --batch 32
    python moesd_cli.py sweep --config data/scenario_qwen2.json --batches 1:128 --out curve.csv
    python moesd_cli.py fit --measurements m.csv --config data/scenario_reference.json --stride 11 --out profile.json
    python moesd_cli.py validate --suite all --seed 0 --trials 100000
    python moesd_cli.py synth --profile profile.json --noise 0.01 --seed 0 --out m.csv
    python moesd_cli.py stride-study --measurements m.csv --config data/scenario_reference.json --strides 11,15,25

Exit codes: 0 success, 1 invalid input or configuration, 2 model-domain error
(including a fit that did not converge; without --strict its profile is
still written), 3 a validation suite failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from pydantic import ValidationError

from ..core import cost_model
from ..core.errors import ConfigError, FitNotConvergedError, ModelDomainError
from ..core.presets import DEFAULT_GRID, HARDWARE, MOE_ARCHITECTURES, REFERENCE_ACCEPTANCE
from ..core.schemas import FitConfig, HardwareSpec, MoEArch, ScenarioConfig, SynthesisGrid
from ..core.settings import RuntimeSettings, get_settings
from ..services import calibration_service, validation_service
from ..services.data_service import DataService, sweep_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_MODEL = 2
EXIT_SUITE = 3


class _Parser(argparse.ArgumentParser):
    """Argument errors become ConfigError so they share exit code 1."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _formatter(full_precision: bool) -> Callable[[float], str]:
    if full_precision:
        return repr
    return lambda value: f"{value:.6g}"


def parse_int_list(text: str) -> List[int]:
    """`1:128` (inclusive), `1:128:4`, or a comma list `1,2,4`."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step < 1:
                raise ValueError
            values = list(range(start, stop + 1, step))
        else:
            values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list {text!r}") from exc
    if not values:
        raise ConfigError(f"empty range {text!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"range {text!r} must be strictly increasing")
    return values


# --------------------------- Commands --------------------------- #


def _load_scenario(args, data: DataService) -> ScenarioConfig:
    """Scenario file with the --arch / --hardware presets swapped in."""
    scenario = data.load_scenario(args.config)
    update = {}
    if args.arch:
        update["arch"] = MoEArch(**MOE_ARCHITECTURES[args.arch])
    if args.hardware:
        update["hw"] = HardwareSpec(**HARDWARE[args.hardware])
    return scenario.model_copy(update=update) if update else scenario


def cmd_predict(args, data: DataService) -> int:
    scenario = _load_scenario(args, data)
    params = data.scenario_params(scenario, args.config)
    variant = args.variant or scenario.variant
    report = cost_model.speedup_report(
        params, scenario.arch, scenario.hw, args.batch, scenario.spec, variant, scenario.saturation_ratio
    )
    if args.json:
        print(json.dumps(report.model_dump(), indent=2))
        return EXIT_OK

    fmt = _formatter(args.full_precision)
    b = report.breakdown
    lines = [
        f"batch_size: {report.batch_size}",
        f"draft_length: {report.draft_length}",
        f"sigma: {fmt(report.sigma)}",
        f"variant: {report.variant}",
        f"speedup: {fmt(report.speedup)}",
        f"target_efficiency: {fmt(report.target_efficiency)}",
        f"threshold_tokens: {report.threshold_tokens}",
        f"transition_tokens: {fmt(report.transition_tokens)}",
        f"ar_time: {fmt(b.ar_time)}",
        f"verify_time: {fmt(b.verify_time)}",
        f"draft_time: {fmt(b.draft_time)}",
        f"reject_time: {fmt(b.reject_time)}",
        f"n_ar: {fmt(b.n_ar)}",
        f"n_sd: {fmt(b.n_sd)}",
        f"t_ar: {fmt(b.t_ar)}",
        f"t_sd: {fmt(b.t_sd)}",
    ]
    for prefix, terms in (("ar", b.ar_terms), ("verify", b.verify_terms)):
        for name in ("bias", "dense_growth", "expert_loading", "expert_growth"):
            lines.append(f"{prefix}.{name}: {fmt(getattr(terms, name))}")
    lines.append(f"ar_expert_regime: {report.ar_expert_regime}")
    lines.append(f"verify_expert_regime: {report.verify_expert_regime}")
    lines.append(f"verify_saturated: {'yes' if report.verify_saturated else 'no'}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_sweep(args, data: DataService) -> int:
    scenario = _load_scenario(args, data)
    params = data.scenario_params(scenario, args.config)
    batches = parse_int_list(args.batches)
    sweep = cost_model.sweep_batch(
        params, scenario.arch, scenario.hw, scenario.spec.draft_length, scenario.spec.sigma,
        batches, args.variant or scenario.variant,
    )
    fmt = _formatter(args.full_precision)
    if args.out:
        data.save_sweep(args.out, sweep, fmt)
        logger.info("Wrote %s sweep points to %s", len(batches), args.out)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["batch_size", "speedup", "target_efficiency"])
        for b, x, te in zip(sweep.batch_sizes, sweep.speedups, sweep.target_efficiencies):
            writer.writerow([b, fmt(x), fmt(te)])
    print(sweep_summary(sweep, fmt))
    return EXIT_OK


def _fit_config(args, settings: RuntimeSettings, variant: str) -> FitConfig:
    return FitConfig(
        variant=variant,
        max_iterations=args.max_iterations,
        multi_start_count=args.starts,
        seed=settings.seed if args.seed is None else args.seed,
        workers=settings.workers if args.workers is None else args.workers,
    )


def cmd_fit(args, data: DataService, settings: RuntimeSettings) -> int:
    scenario = data.load_scenario(args.config)
    measurements = data.load_measurements(args.measurements)
    subset = calibration_service.stride_select(measurements, args.stride, args.begin)
    bounds = calibration_service.default_bounds(
        scenario.vol, scenario.hw, subset, scenario.calibration.reject_time_ceiling
    )
    config = _fit_config(args, settings, args.variant or scenario.variant)
    result = calibration_service.fit(subset, bounds, scenario.hw, config, strict=args.strict)
    profile = calibration_service.build_profile(
        result, bounds, scenario.hw, scenario.arch.total_experts, config, scenario.spec, args.stride, args.begin
    )
    data.save_profile(args.out, profile)

    fmt = _formatter(args.full_precision)
    print(f"measurements: {result.measurement_count} of {len(measurements)}")
    print(f"batch_sizes_involved: {','.join(str(b) for b in result.batch_sizes_involved)}")
    print(f"objective: {fmt(result.objective)}")
    print(f"mse: {fmt(result.mse)}")
    print(f"converged: {str(result.converged).lower()}")
    if not result.converged:
        print(f"warning: best-so-far parameters written to {args.out} ({result.message})", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


def cmd_validate(args, settings: RuntimeSettings) -> int:
    report = validation_service.run_suites(
        args.suite,
        seed=settings.seed if args.seed is None else args.seed,
        trials=args.trials,
        workers=settings.workers if args.workers is None else args.workers,
    )
    fmt = _formatter(args.full_precision)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(
            f"{status} {check.suite} {check.name} observed={fmt(check.observed)} "
            f"expected={fmt(check.expected)} margin={fmt(check.margin)}"
        )
    failures = report.failures()
    print(f"{len(report.checks) - len(failures)}/{len(report.checks)} checks passed")
    return EXIT_OK if report.passed else EXIT_SUITE


def cmd_synth(args, data: DataService, settings: RuntimeSettings) -> int:
    profile = data.load_profile(args.profile)
    grid = SynthesisGrid(
        k_values=parse_int_list(args.k_values),
        gammas=parse_int_list(args.gammas),
        batch_sizes=parse_int_list(args.batch_sizes),
        total_experts=args.total_experts or profile.total_experts,
    )
    if args.acceptance is not None:
        acceptance = args.acceptance
    elif profile.spec is not None:
        acceptance = profile.spec.alpha
    else:
        acceptance = REFERENCE_ACCEPTANCE
    measurements = calibration_service.synthesize_measurements(
        profile.params, profile.hardware, grid, acceptance,
        noise=args.noise,
        seed=settings.seed if args.seed is None else args.seed,
        variant=profile.variant,
    )
    data.save_measurements(args.out, measurements)
    print(f"wrote {len(measurements)} measurements to {args.out}")
    return EXIT_OK


def cmd_stride_study(args, data: DataService, settings: RuntimeSettings) -> int:
    scenario = data.load_scenario(args.config)
    measurements = data.load_measurements(args.measurements)
    bounds = calibration_service.default_bounds(
        scenario.vol, scenario.hw, measurements, scenario.calibration.reject_time_ceiling
    )
    config = _fit_config(args, settings, args.variant or scenario.variant)
    rows = calibration_service.stride_study(
        measurements, bounds, scenario.hw, parse_int_list(args.strides), config, args.begin
    )
    fmt = _formatter(args.full_precision)
    out = Path(args.out).open("w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["m", "stride", "begin", "mse", "objective", "converged", "batch_sizes"])
        for row in rows:
            writer.writerow([
                row.m, row.stride, row.begin, fmt(row.mse), fmt(row.objective),
                str(row.converged).lower(), " ".join(str(b) for b in row.batch_sizes),
            ])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# --------------------------- Parser --------------------------- #

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="moesd", description="Speedup modeling for speculative decoding on MoE models")
    parser.add_argument("--data-dir", help="Base directory for relative input paths (default: MOESD_DATA_DIR)")
    parser.add_argument("--log-level", help="Logging level (default: MOESD_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    def precision(p: argparse.ArgumentParser) -> None:
        p.add_argument("--full-precision", action="store_true", help="Print round-trip-exact floats")

    def presets(p: argparse.ArgumentParser) -> None:
        p.add_argument("--arch", choices=sorted(MOE_ARCHITECTURES), help="Replace the scenario's expert layout")
        p.add_argument("--hardware", choices=sorted(HARDWARE), help="Replace the scenario's GPU")

    def fit_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--measurements", required=True, help="Measurement CSV")
        p.add_argument("--config", required=True, help="Scenario JSON (hardware and volumes)")
        p.add_argument("--begin", type=int, default=0, help="Offset into the sorted measurement table")
        p.add_argument("--seed", type=int, help="Multi-start seed (default: MOESD_SEED)")
        p.add_argument("--starts", type=int, default=8, help="Number of multi-start initial points")
        p.add_argument("--workers", type=int, help="Concurrent starts (default: MOESD_WORKERS)")
        p.add_argument("--max-iterations", type=int, default=2000, help="Function evaluations per start")
        p.add_argument("--variant", choices=cost_model.VARIANTS)

    p = sub.add_parser("predict", help="Speedup and forward-time breakdown for one batch size")
    p.add_argument("--config", required=True, help="Scenario JSON")
    p.add_argument("--batch", type=int, required=True, help="Batch size B")
    p.add_argument("--variant", choices=cost_model.VARIANTS)
    p.add_argument("--json", action="store_true", help="Print the report as JSON")
    precision(p)
    presets(p)

    p = sub.add_parser("sweep", help="Speedup curve over a batch-size range")
    p.add_argument("--config", required=True, help="Scenario JSON")
    p.add_argument("--batches", default="1:128", help="Range a:b[:step] (inclusive) or comma list")
    p.add_argument("--out", help="Output CSV (default: stdout)")
    p.add_argument("--variant", choices=cost_model.VARIANTS)
    precision(p)
    presets(p)

    p = sub.add_parser("fit", help="Calibrate CostParams from measurements")
    fit_flags(p)
    p.add_argument("--stride", type=int, default=1, help="Use every N-th measurement")
    p.add_argument("--out", required=True, help="Output profile JSON")
    p.add_argument("--strict", action="store_true", help="Fail without writing when the fit does not converge")
    precision(p)

    p = sub.add_parser("validate", help="Run the self-validation suites")
    p.add_argument("--suite", default="all", choices=("all",) + validation_service.SUITES)
    p.add_argument("--seed", type=int, help="Seed (default: MOESD_SEED)")
    p.add_argument("--trials", type=int, default=100_000, help="Monte Carlo trials per check")
    p.add_argument("--workers", type=int, help="Concurrent Monte Carlo blocks (default: MOESD_WORKERS)")
    precision(p)

    p = sub.add_parser("synth", help="Synthesize measurements from a calibration profile")
    p.add_argument("--profile", required=True, help="Profile JSON holding the true parameters")
    p.add_argument("--noise", type=float, default=0.0, help="Relative Gaussian noise level")
    p.add_argument("--seed", type=int, help="Noise seed (default: MOESD_SEED)")
    p.add_argument("--out", required=True, help="Output measurement CSV")
    p.add_argument("--k-values", default=",".join(str(k) for k in DEFAULT_GRID["k_values"]))
    p.add_argument("--gammas", default=",".join(str(g) for g in DEFAULT_GRID["gammas"]))
    p.add_argument("--batch-sizes", default=",".join(str(b) for b in DEFAULT_GRID["batch_sizes"]))
    p.add_argument("--total-experts", type=int, help="Total experts E (default: the profile's)")
    p.add_argument("--acceptance", type=float, help="Acceptance rate alpha (default: the profile's)")

    p = sub.add_parser("stride-study", help="Fit quality as a function of the measurement stride")
    fit_flags(p)
    p.add_argument("--strides", default="1,2,4,8,11,15,20,25", help="Comma list or range of strides")
    p.add_argument("--out", help="Output CSV (default: stdout)")
    precision(p)
    return parser


def _dispatch(args, settings: RuntimeSettings) -> int:
    data = DataService(args.data_dir or settings.data_dir)
    if args.command == "predict":
        return cmd_predict(args, data)
    if args.command == "sweep":
        return cmd_sweep(args, data)
    if args.command == "fit":
        return cmd_fit(args, data, settings)
    if args.command == "validate":
        return cmd_validate(args, settings)
    if args.command == "synth":
        return cmd_synth(args, data, settings)
    return cmd_stride_study(args, data, settings)


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args, settings)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ModelDomainError, FitNotConvergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
