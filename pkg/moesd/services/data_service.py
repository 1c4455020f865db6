"""
File persistence for scenarios, calibration profiles and measurement tables.

Scenarios and profiles are JSON documents validated into pydantic records;
measurements are CSV files with the header `batch_size,gamma,K,E,sigma,speedup`.
Relative read paths fall back to the data directory (MOESD_DATA_DIR) when they
do not exist relative to the working directory.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from threading import Lock
from typing import Any, Callable, Dict, Iterable, List, Optional, Union

from pydantic import ValidationError

from ..core.errors import ConfigError, MeasurementFileError
from ..core.schemas import CalibrationProfile, CostParams, Measurement, ScenarioConfig, SweepResult
from ..core.settings import get_settings

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MEASUREMENT_FIELDS = ("batch_size", "gamma", "K", "E", "sigma", "speedup")
_INT_FIELDS = ("batch_size", "gamma", "K", "E")


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    where = ".".join(str(part) for part in err.get("loc", ()))
    return f"{where}: {err['msg']}" if where else err["msg"]


class DataService:
    """Reads and writes the toolkit's JSON and CSV artifacts."""

    FILE_NAMES = {
        "scenario": "scenario.json",
        "profile": "profile.json",
        "measurements": "measurements.csv",
    }

    def __init__(self, data_dir: Optional[str] = None):
        self.data_dir = Path(data_dir or get_settings().data_dir)
        self._lock = Lock()

    def resolve(self, path: Optional[PathLike], kind: Optional[str] = None) -> Path:
        """Locate an input file, trying the working directory first, then the data directory."""
        if path is None:
            if kind is None:
                raise ConfigError("no path given")
            path = self.FILE_NAMES[kind]
        candidate = Path(path)
        if candidate.is_absolute() or candidate.exists():
            return candidate
        in_data = self.data_dir / candidate
        return in_data if in_data.exists() else candidate

    # --------------------------- JSON --------------------------- #

    def _load_json(self, path: PathLike) -> Any:
        resolved = self.resolve(path)
        try:
            with resolved.open("r", encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError("file not found", path=str(resolved)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc.msg})", path=str(resolved), line=exc.lineno) from exc

    def _save_json(self, path: PathLike, data: Any) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            with target.open("w", encoding="utf-8") as f:
                json.dump(data, f, indent=2, allow_nan=False)
                f.write("\n")
        return target

    def load_scenario(self, path: PathLike) -> ScenarioConfig:
        data = self._load_json(path)
        try:
            return ScenarioConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(_first_error(exc), path=str(self.resolve(path))) from exc

    def save_scenario(self, path: PathLike, scenario: ScenarioConfig) -> Path:
        return self._save_json(path, scenario.model_dump(by_alias=True, exclude_none=True))

    def load_profile(self, path: PathLike) -> CalibrationProfile:
        data = self._load_json(path)
        try:
            return CalibrationProfile.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(_first_error(exc), path=str(self.resolve(path))) from exc

    def save_profile(self, path: PathLike, profile: CalibrationProfile) -> Path:
        target = self._save_json(path, profile.model_dump(mode="json", by_alias=True))
        logger.info("Wrote calibration profile to %s", target)
        return target

    def scenario_params(self, scenario: ScenarioConfig, scenario_path: Optional[PathLike] = None) -> CostParams:
        """CostParams given inline, or loaded from the profile the scenario references."""
        if scenario.params is not None:
            return scenario.params
        if scenario.profile is None:
            raise ConfigError("scenario has neither params nor a profile reference", path=scenario_path)
        profile_path = Path(scenario.profile)
        if not profile_path.is_absolute() and scenario_path is not None:
            sibling = self.resolve(scenario_path).parent / profile_path
            if sibling.exists():
                profile_path = sibling
        return self.load_profile(profile_path).params

    # --------------------------- Measurements --------------------------- #

    def load_measurements(self, path: PathLike) -> List[Measurement]:
        """Parse a measurement CSV; every bad row is reported as `path:line: reason`."""
        resolved = self.resolve(path, "measurements")
        name = str(resolved)
        try:
            f = resolved.open("r", encoding="utf-8", newline="")
        except FileNotFoundError as exc:
            raise MeasurementFileError("file not found", path=name) from exc

        measurements: List[Measurement] = []
        with f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None:
                raise MeasurementFileError("empty file, expected a header row", path=name, line=1)
            header = [col.strip() for col in header]
            if sorted(header) != sorted(MEASUREMENT_FIELDS) or len(header) != len(MEASUREMENT_FIELDS):
                raise MeasurementFileError(
                    f"header must be {','.join(MEASUREMENT_FIELDS)}, got {','.join(header)}",
                    path=name,
                    line=1,
                )
            for row in reader:
                if not row or all(not cell.strip() for cell in row):
                    continue
                line = reader.line_num
                if len(row) != len(header):
                    raise MeasurementFileError(
                        f"expected {len(header)} fields, got {len(row)}", path=name, line=line
                    )
                record: Dict[str, Any] = {}
                for key, raw in zip(header, row):
                    raw = raw.strip()
                    try:
                        record[key] = int(raw) if key in _INT_FIELDS else float(raw)
                    except ValueError as exc:
                        raise MeasurementFileError(f"{key}: cannot parse {raw!r}", path=name, line=line) from exc
                try:
                    measurements.append(Measurement(**record))
                except ValidationError as exc:
                    raise MeasurementFileError(_first_error(exc), path=name, line=line) from exc

        logger.info("Loaded %s measurements from %s", len(measurements), name)
        return measurements

    def save_measurements(self, path: PathLike, measurements: Iterable[Measurement]) -> Path:
        """Write measurements with round-trip-exact float text."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        rows = list(measurements)
        with self._lock:
            with target.open("w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(MEASUREMENT_FIELDS)
                for m in rows:
                    writer.writerow([m.batch_size, m.gamma, m.K, m.E, repr(m.sigma), repr(m.speedup)])
        logger.info("Wrote %s measurements to %s", len(rows), target)
        return target

    # --------------------------- Curves --------------------------- #

    def save_sweep(self, path: PathLike, sweep: SweepResult, fmt: Callable[[float], str] = repr) -> Path:
        """`batch_size,speedup,target_efficiency` rows followed by a `# peak` summary line."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            with target.open("w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["batch_size", "speedup", "target_efficiency"])
                for b, x, te in zip(sweep.batch_sizes, sweep.speedups, sweep.target_efficiencies):
                    writer.writerow([b, fmt(x), fmt(te)])
                f.write(sweep_summary(sweep, fmt) + "\n")
        return target


def sweep_summary(sweep: SweepResult, fmt: Callable[[float], str] = repr) -> str:
    lo, hi = sweep.robust_range
    return (
        f"# peak_speedup={fmt(sweep.peak_speedup)} peak_batch={sweep.peak_batch} "
        f"robust_range=[{lo},{hi}] threshold={fmt(sweep.robust_threshold)}"
    )
