"""Small argument and array validation helpers shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Accepts ``None``, an int, a ``SeedSequence`` or an existing generator
    (returned unchanged so callers can share a stream deliberately).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_fraction(value, name: str, *, closed_low: bool = True, closed_high: bool = True) -> float:
    value = float(value)
    low_ok = value >= 0.0 if closed_low else value > 0.0
    high_ok = value <= 1.0 if closed_high else value < 1.0
    if not (low_ok and high_ok):
        lo = "[" if closed_low else "("
        hi = "]" if closed_high else ")"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {value}")
    return value


def check_label_matrix(X, num_classes: int | None = None) -> np.ndarray:
    """Validate a (n_tasks, n_workers) response matrix with ``-1`` for missing.

    Returns an ``int64`` copy-free view when possible.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d label matrix, got shape {X.shape}")
    if X.size and not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.equal(np.mod(X, 1), 0)):
            raise ValueError("label matrix must contain integer labels")
    X = X.astype(np.int64, copy=False)
    if X.size and X.min() < -1:
        raise ValueError("labels must be >= 0 (use -1 for a missing response)")
    if num_classes is not None and X.size and X.max() >= num_classes:
        raise ValueError(f"label {X.max()} out of range for {num_classes} classes")
    return X


def check_state_vector(s, n: int, name: str = "state") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError(f"{name} contains non-finite entries")
    return s
