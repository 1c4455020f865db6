"""Core modeling for moesd."""
from .errors import (
    CalibrationInputError,
    ConfigError,
    FitNotConvergedError,
    MeasurementFileError,
    ModelDomainError,
    MoesdError,
)
from .presets import DEFAULT_GRID, HARDWARE, MOE_ARCHITECTURES
from .schemas import CostParams, HardwareSpec, MoEArch, SpecConfig, VolumeSpec

__all__ = [
    "CalibrationInputError",
    "ConfigError",
    "CostParams",
    "DEFAULT_GRID",
    "FitNotConvergedError",
    "HARDWARE",
    "HardwareSpec",
    "MOE_ARCHITECTURES",
    "MeasurementFileError",
    "ModelDomainError",
    "MoEArch",
    "MoesdError",
    "SpecConfig",
    "VolumeSpec",
]
