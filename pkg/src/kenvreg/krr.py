"""Multivariate kernel ridge regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataSet
from .kernels import KernelSpec, gram, kernel_matrix
from .linalg import solve_regularized


@dataclass(frozen=True)
class KrrModel:
    dual_coefs: np.ndarray  # n x r, (K + lam I)^{-1} Y_c
    kernel: KernelSpec
    lam: float
    X_train: np.ndarray
    y_mean: np.ndarray


def krr_fit(data: DataSet, kernel: KernelSpec, lam: float, center: bool = True) -> KrrModel:
    """Fit kernel ridge regression with responses centered at their training mean.

    With ``center=False`` the responses are used as given, i.e. the mean
    function is assumed to be zero-mean already.
    """
    if data.n < 2:
        raise ValueError("need at least two observations")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    y_mean = data.Y.mean(axis=0) if center else np.zeros(data.r)
    K = gram(kernel, data.X)
    coefs = solve_regularized(K, lam, data.Y - y_mean)
    return KrrModel(coefs, kernel, float(lam), data.X.copy(), y_mean)


def krr_predict(model: KrrModel, X_new) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[:, None] if model.X_train.shape[1] == 1 else X_new[None, :]
    if X_new.shape[1] != model.X_train.shape[1]:
        raise ValueError(f"expected {model.X_train.shape[1]} predictors, got {X_new.shape[1]}")
    Kx = kernel_matrix(model.kernel, X_new, model.X_train)
    return Kx @ model.dual_coefs + model.y_mean
