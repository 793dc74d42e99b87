"""Input validation helpers shared across the package."""

import math

import numpy as np
from sklearn.utils.validation import check_array

SIMPLEX_ATOL = 1e-9


def check_log_base(base):
    """Normalise a log base argument to ``2`` or ``"e"``.

    Accepts ``2``, ``"2"``, ``"e"`` and ``math.e``.
    """
    if isinstance(base, str):
        key = base.strip().lower()
        if key == "2":
            return 2
        if key == "e":
            return "e"
    elif base == 2:
        return 2
    elif isinstance(base, float) and base == math.e:
        return "e"
    raise ValueError(f"log base must be 2 or 'e', got {base!r}")


def log_factor(base):
    """Divisor turning natural logs into logs of ``base``."""
    return math.log(2.0) if check_log_base(base) == 2 else 1.0


def check_probability_vector(probs, *, normalize=False, atol=SIMPLEX_ATOL, name="probs"):
    p = check_array(np.asarray(probs, dtype=float), ensure_2d=False, ensure_min_samples=1,
                    input_name=name)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {p.shape}")
    if np.any(p < 0):
        if np.min(p) < -atol:
            raise ValueError(f"{name} has negative entries (min {np.min(p)!r})")
        p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0:
        raise ValueError(f"{name} has zero total mass")
    if not normalize and abs(total - 1.0) > atol:
        raise ValueError(f"{name} sums to {total!r}, not 1")
    return p / total


def check_probability_matrix(probs, *, rows_sum_to_one=False, normalize=False,
                             atol=SIMPLEX_ATOL, name="probs"):
    P = check_array(np.asarray(probs, dtype=float), ensure_2d=True, input_name=name)
    if np.any(P < 0):
        if np.min(P) < -atol:
            raise ValueError(f"{name} has negative entries (min {np.min(P)!r})")
        P = np.clip(P, 0.0, None)
    if rows_sum_to_one:
        sums = P.sum(axis=1)
        if not normalize and np.any(np.abs(sums - 1.0) > atol):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"{name} row {bad} sums to {sums[bad]!r}, not 1")
        if np.any(sums <= 0):
            raise ValueError(f"{name} has a row with zero mass")
        return P / sums[:, None]
    total = P.sum()
    if total <= 0:
        raise ValueError(f"{name} has zero total mass")
    if not normalize and abs(total - 1.0) > atol:
        raise ValueError(f"{name} sums to {total!r}, not 1")
    return P / total


def check_points(points, name="points"):
    """Coerce alphabet points to a 2-D float array of shape (n, d)."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty list of equal-length vectors")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_square_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def check_series(series, *, min_length=1, name="series"):
    x = np.asarray(series, dtype=float).ravel()
    if x.size < min_length:
        raise ValueError(f"{name} needs at least {min_length} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def readonly(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr
