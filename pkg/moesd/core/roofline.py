"""
Roofline arithmetic and the execution-time growth curve G.

G(t; lambda*RP, s) grows as s^t up to the transition point lambda*RP and
continues along its tangent afterwards, so value and slope are continuous there.
All functions accept scalars or numpy arrays for `t`.
"""

import logging
import math
import sys

import numpy as np

from .errors import ModelDomainError

logger = logging.getLogger(__name__)

DEFAULT_LOG_CAP = 1e4
_LOG_FLOAT_MAX = math.log(sys.float_info.max)


def arithmetic_intensity(compute_ops: float, bytes_accessed: float) -> float:
    """Operations per byte moved."""
    if bytes_accessed <= 0:
        raise ModelDomainError(f"bytes accessed must be positive, got {bytes_accessed}")
    if compute_ops < 0:
        raise ModelDomainError(f"operation count must be non-negative, got {compute_ops}")
    return compute_ops / bytes_accessed


def classify_boundness(intensity: float, ridge_point: float) -> str:
    """'memory-bound' below the ridge point, 'compute-bound' above, 'balanced' on it."""
    if ridge_point <= 0:
        raise ModelDomainError("ridge point must be positive")
    if intensity < ridge_point:
        return "memory-bound"
    if intensity > ridge_point:
        return "compute-bound"
    return "balanced"


def _check_curve_args(t, transition: float, s: float) -> np.ndarray:
    if not s > 1.0:
        raise ModelDomainError(f"growth base s must exceed 1, got {s}")
    if not transition > 0.0:
        raise ModelDomainError(f"transition point must be positive, got {transition}")
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0):
        raise ModelDomainError(f"token count must be non-negative, got {t!r}")
    return arr


def log_growth_curve(t, transition: float, s: float):
    """Natural log of G; finite wherever G itself would overflow."""
    arr = _check_curve_args(t, transition, s)
    ln_s = math.log(s)
    linear = np.log1p(ln_s * np.maximum(arr - transition, 0.0)) + transition * ln_s
    out = np.where(arr <= transition, arr * ln_s, linear)
    return float(out) if out.ndim == 0 else out


def growth_curve(t, transition: float, s: float, log_cap: float = DEFAULT_LOG_CAP):
    """
    Piecewise growth factor G(t; transition, s).

    Args:
        t: token count (real, >= 0), scalar or array
        transition: lambda * RP, where the exponential branch hands over to the linear one
        s: growth base, > 1
        log_cap: transitions above this are evaluated in log space

    Returns:
        Dimensionless cost factor with the same shape as `t`.
    """
    arr = _check_curve_args(t, transition, s)
    ln_s = math.log(s)
    if transition > log_cap or transition * ln_s > _LOG_FLOAT_MAX / 2:
        log_g = np.asarray(log_growth_curve(arr, transition, s))
        if np.any(log_g > _LOG_FLOAT_MAX):
            logger.debug("growth curve saturated at float max (transition=%s, s=%s)", transition, s)
        out = np.exp(np.minimum(log_g, _LOG_FLOAT_MAX))
        return float(out) if out.ndim == 0 else out

    plateau = math.exp(transition * ln_s)
    out = np.where(
        arr <= transition,
        np.exp(np.minimum(arr, transition) * ln_s),
        plateau * (1.0 + ln_s * (arr - transition)),
    )
    return float(out) if out.ndim == 0 else out
