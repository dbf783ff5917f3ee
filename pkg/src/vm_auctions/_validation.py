"""Input validation helpers shared by every mechanism."""

import math

import numpy as np
from sklearn.utils import check_array


class InvariantError(RuntimeError):
    """An internal invariant of a result object does not hold."""


def check_valuations(values, name="values"):
    """Validate a bidder x outcome matrix of nonnegative finite values.

    Rows are bidders, columns are outcomes. The same layout holds reports
    (bids) when a mechanism is run on declared values.
    """
    arr = np.asarray(values, dtype=float) if not isinstance(values, np.ndarray) else values
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("no bidders/outcomes")
    arr = check_array(arr, dtype=float, ensure_all_finite=True, input_name=name)
    if (arr < 0).any():
        raise ValueError(f"{name} must be nonnegative")
    return arr


def parse_alpha(alpha):
    """Return alpha as a float in [1, inf]; accepts the string 'inf'."""
    if isinstance(alpha, str):
        if alpha.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        alpha = float(alpha)
    alpha = float(alpha)
    if math.isnan(alpha) or alpha < 1:
        raise ValueError(f"alpha must lie in [1, inf], got {alpha}")
    return alpha


def check_gamma(gamma):
    gamma = float(gamma)
    if not (gamma > 0) or math.isinf(gamma):
        raise ValueError(f"gamma must be a positive finite real, got {gamma}")
    return gamma


def check_vector(x, name, *, positive=False, allow_empty=False):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size == 0 and not allow_empty:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    if positive and (arr <= 0).any():
        raise ValueError(f"{name} must be positive")
    if (arr < 0).any():
        raise ValueError(f"{name} must be nonnegative")
    return arr


def check_slot_effects(alpha):
    """Slot effects must lie in (0, 1] and be strictly descending."""
    arr = check_vector(alpha, "alpha", positive=True)
    if (arr > 1).any():
        raise ValueError("alpha entries must lie in (0, 1]")
    if (np.diff(arr) >= 0).any():
        raise ValueError("alpha not strictly descending")
    return arr
