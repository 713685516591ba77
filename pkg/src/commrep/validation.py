"""Input validation helpers for the estimator API."""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, UsageError


def check_array(X, name="X", ndim=2):
    """Coerce to a finite float64 array of the given rank."""
    X = np.asarray(X, dtype=float)
    if X.ndim != ndim:
        raise ConfigurationError(f"{name} must be {ndim}-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigurationError(f"{name} contains non-finite values")
    return X


def check_consistent_length(*arrays):
    lengths = {a.shape[0] for a in arrays if a is not None}
    if len(lengths) > 1:
        raise ConfigurationError(f"inconsistent sample counts: {sorted(lengths)}")


def check_is_fitted(estimator, attribute="model_"):
    if getattr(estimator, attribute, None) is None:
        raise UsageError(
            f"{type(estimator).__name__} is not fitted yet; call fit first")
