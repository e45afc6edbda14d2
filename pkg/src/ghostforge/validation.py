"""Input validation helpers shared by the estimators and the functional API."""

from numbers import Integral, Real

import numpy as np


def check_unit_field(values, name="image", ndim=2):
    """Return ``values`` as a float64 array with samples in [0, 1].

    Raises ``ValueError`` if the array has the wrong rank, is empty, holds
    non-finite samples or leaves the unit interval.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0 or min(arr.shape) < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"{name} samples must lie in [0, 1], got [{arr.min()}, {arr.max()}]"
        )
    return arr


def check_image_batch(X, name="X"):
    """Coerce a stack of images to a float64 ``(n, H, W)`` array in [0, 1]."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    return check_unit_field(arr, name=name, ndim=3)


def check_same_shape(a, b, what="inputs"):
    if np.shape(a) != np.shape(b):
        raise ValueError(
            f"{what} must share dimensions, got {np.shape(a)} and {np.shape(b)}"
        )


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, name, minimum=None, strict=False):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if minimum is not None:
        if strict and value <= minimum:
            raise ValueError(f"{name} must be > {minimum}, got {value}")
        if not strict and value < minimum:
            raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
