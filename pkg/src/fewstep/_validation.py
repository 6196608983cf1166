"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numpy as np


class InvalidInputError(ValueError):
    """Raised for malformed or non-finite trajectory input."""


def check_trajectory(x, name="x"):
    """Return ``x`` as a finite float64 ``(n, d)`` array.

    1-D input is treated as a single action dimension.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be (frames, dims); got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must have n >= 1 and d >= 1; got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_trajectories(X, name="X"):
    """Return a batch of trajectories as a finite ``(N, n, d)`` array.

    Accepts a 3-D array, a single 2-D trajectory, or a list of equally
    shaped trajectories.
    """
    if isinstance(X, (list, tuple)):
        if not X:
            raise InvalidInputError(f"{name} is empty")
        shapes = {np.shape(x) for x in X}
        if len(shapes) != 1:
            raise InvalidInputError(f"{name}: trajectories differ in shape {sorted(shapes)}")
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise InvalidInputError(f"{name} must be (count, frames, dims); got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_same_shape(a, b, what="inputs"):
    if np.shape(a) != np.shape(b):
        raise InvalidInputError(f"{what}: shape mismatch {np.shape(a)} vs {np.shape(b)}")
