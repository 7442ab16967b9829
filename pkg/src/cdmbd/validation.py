"""Input validation helpers."""
from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def check_tensor(X, n_channels: int = 7) -> np.ndarray:
    """Return X as a finite float array of shape (T, N, n_channels)."""
    if hasattr(X, "raw") and hasattr(X, "z"):
        raise ValidationError("expected an observation tensor, got node statistics")
    Y = np.asarray(X, dtype=float)
    if Y.ndim != 3:
        raise ValidationError(f"observation tensor must be T x N x D, got shape {Y.shape}")
    if Y.shape[2] != n_channels:
        raise ValidationError(f"expected {n_channels} channels, got {Y.shape[2]}")
    if Y.shape[0] < 2 or Y.shape[1] < 3:
        raise ValidationError("need at least 2 time steps and 3 nodes")
    if not np.all(np.isfinite(Y)):
        raise ValidationError("observation tensor has non-finite entries")
    return Y
