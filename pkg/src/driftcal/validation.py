"""Input validation helpers shared across the package.

Signal series are plain 1-D float64 numpy arrays; these helpers coerce and
check them at module boundaries so the numerical code can assume clean input.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgumentError


def as_series(x, *, name: str = "series", min_length: int = 1) -> np.ndarray:
    """Coerce to a 1-D float64 array of finite samples.

    Raises InvalidArgumentError if the input is not 1-D, is shorter than
    ``min_length``, or contains NaN/Inf.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < min_length:
        raise InvalidArgumentError(
            f"{name} must have at least {min_length} sample(s), got {arr.size}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite samples")
    return arr


def as_windows(x, *, width: int, name: str = "windows") -> np.ndarray:
    """Coerce to a 2-D float64 array of rows of length ``width``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise InvalidArgumentError(
            f"{name} must have shape (n, {width}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite samples")
    return arr


def check_equal_length(a: np.ndarray, b: np.ndarray, *, names=("a", "b")) -> None:
    if len(a) != len(b):
        raise InvalidArgumentError(
            f"{names[0]} and {names[1]} must have equal length "
            f"({len(a)} != {len(b)})"
        )


def check_finite_scalar(value, *, name: str) -> float:
    v = float(value)
    if not np.isfinite(v):
        raise InvalidArgumentError(f"{name} must be finite, got {value}")
    return v


def check_seed(seed, *, name: str = "seed") -> int:
    s = int(seed)
    if s < 0 or s >= 2**64:
        raise InvalidArgumentError(f"{name} must be a 64-bit unsigned integer, got {seed}")
    return s
