"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils import check_array

from .core import InvalidArgumentError


def check_features(X) -> np.ndarray:
    return check_array(X, dtype=np.float64, ensure_2d=True)


def check_binary(v, name="labels") -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if v.size and not np.all((v == 0) | (v == 1)):
        raise InvalidArgumentError(f"{name} must be binary (0/1)")
    return v.astype(np.int64)


def check_weights(w, n) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise InvalidArgumentError(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite and non-negative")
    if w.sum() <= 0:
        raise InvalidArgumentError("all classification weights are zero")
    return w


def check_classification_data(X, z, w):
    X = check_features(X)
    z = check_binary(z, "z")
    if z.shape[0] != X.shape[0]:
        raise InvalidArgumentError("X and z have different numbers of rows")
    w = np.ones(X.shape[0]) if w is None else check_weights(w, X.shape[0])
    return X, z, w
