"""
Rate fitting for convergence traces.
"""

import numpy as np

from src.core.oracle import InvalidInputError

FIT_MODES = ("loglog", "linear")


def fit_rate(xs, ys, mode: str = "loglog") -> float:
    """
    Least-squares slope of log(ys) against log(xs) ("loglog", power laws)
    or against xs ("linear", geometric rates).
    """
    if mode not in FIT_MODES:
        raise InvalidInputError(f"mode must be one of {FIT_MODES}, got {mode!r}")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise InvalidInputError(f"xs and ys must be matching 1-D sequences, got {xs.shape} and {ys.shape}")
    if xs.size < 4:
        raise InvalidInputError(f"need at least 4 points, got {xs.size}")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise InvalidInputError("xs and ys must be finite")
    if np.any(ys <= 0):
        raise InvalidInputError("ys must be positive")
    if mode == "loglog":
        if np.any(xs <= 0):
            raise InvalidInputError("xs must be positive for a log-log fit")
        xs = np.log(xs)
    if np.ptp(xs) == 0:
        raise InvalidInputError("xs are all equal; the slope is undefined")
    slope, _ = np.polyfit(xs, np.log(ys), 1)
    return float(slope)
