"""
Runtime settings read from the environment.

Usage:
    settings = get_settings()

Every variable is optional; CLI flags take precedence over these defaults.
"""

import os

from dotenv import load_dotenv
from pydantic import BaseModel, Field


class RuntimeSettings(BaseModel):
    data_dir: str = "data"
    seed: int = 0
    workers: int = Field(4, ge=1)
    log_level: str = "INFO"


def get_settings() -> RuntimeSettings:
    """
    Build settings from MOESD_* variables (a local .env file is honoured).

    - MOESD_DATA_DIR: base directory for relative scenario/measurement paths
    - MOESD_SEED: default RNG seed for fit, validate and synth
    - MOESD_WORKERS: concurrency bound for multi-start fits and Monte Carlo blocks
    - MOESD_LOG_LEVEL: logging level name
    """
    load_dotenv()
    return RuntimeSettings(
        data_dir=os.environ.get("MOESD_DATA_DIR", "data"),
        seed=int(os.environ.get("MOESD_SEED", "0")),
        workers=int(os.environ.get("MOESD_WORKERS", "4")),
        log_level=os.environ.get("MOESD_LOG_LEVEL", "INFO").upper(),
    )
