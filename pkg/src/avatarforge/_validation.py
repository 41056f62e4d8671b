"""Small input-validation helpers shared by the estimators."""

import numpy as np

from .errors import DimensionMismatchError

WEIGHT_FORMS = ("gaussian", "literal")


def check_points(points, min_points=1, dim=3):
    """Return ``points`` as a finite float array of shape (n, dim)."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected an (n, {dim}) point array, got shape {arr.shape}")
    if len(arr) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain NaN or infinity")
    return arr


def check_vector(value, size, name="vector"):
    arr = np.asarray(value, dtype=np.float64).ravel()
    if arr.shape != (size,):
        raise DimensionMismatchError(f"{name} must have {size} components, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def check_weight_form(weight_form):
    if weight_form not in WEIGHT_FORMS:
        raise ValueError(f"weight_form must be one of {WEIGHT_FORMS}, got {weight_form!r}")
    return weight_form


def check_betas(betas, n_betas=None):
    """2-D array of shape coefficient rows."""
    arr = np.asarray(betas, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"betas must be 2-D, got shape {arr.shape}")
    if n_betas is not None and arr.shape[1] != n_betas:
        raise DimensionMismatchError(f"expected {n_betas} shape coefficients, got {arr.shape[1]}")
    return arr
