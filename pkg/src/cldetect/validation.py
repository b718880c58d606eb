"""Input validation helpers shared by the estimator, harness and pipeline."""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError
from .nn import ModelSpec
from .taskgen import PATCH_SIDE, center_crop


def as_patch_array(X) -> np.ndarray:
    """Coerce input to an (n, 32, 32) float64 patch stack."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2 and arr.shape == (PATCH_SIDE, PATCH_SIDE):
        arr = arr[None, ...]
    if arr.ndim == 2 and arr.shape[1] == PATCH_SIDE * PATCH_SIDE:
        arr = arr.reshape(-1, PATCH_SIDE, PATCH_SIDE)
    if arr.ndim != 3 or arr.shape[1:] != (PATCH_SIDE, PATCH_SIDE):
        raise ConfigError(
            f"expected patches of shape (n, {PATCH_SIDE}, {PATCH_SIDE}), got {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise ConfigError("patches contain non-finite values")
    return arr


def as_model_inputs(spec: ModelSpec, X) -> np.ndarray:
    """Flatten patches (or accept pre-flattened rows) to match the model width.

    When the model input width is a smaller square than the patch area, the
    patches are center-cropped first, mirroring evaluation-time crop
    semantics.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim == 2 and arr.shape[1] == spec.input_width:
        return arr
    side = int(round(np.sqrt(spec.input_width)))
    if side * side != spec.input_width:
        raise ConfigError(
            f"model input width {spec.input_width} is not a square patch area"
        )
    patches = as_patch_array(arr)
    if side < PATCH_SIDE:
        patches = center_crop(patches, side)
    elif side > PATCH_SIDE:
        raise ConfigError(f"model expects {side}x{side} inputs, larger than patches")
    return patches.reshape(patches.shape[0], -1)


def check_binary_labels(y) -> np.ndarray:
    labels = np.asarray(y)
    if labels.ndim != 1:
        raise ConfigError("labels must be one-dimensional")
    if not np.isin(labels, (0, 1)).all():
        raise ConfigError("labels must be 0 (real) or 1 (fake)")
    return labels.astype(np.int64)
