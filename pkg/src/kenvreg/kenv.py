"""The kernel envelope (KENV) estimator.

A fitted model predicts ``f(x) = G A k(x)^T + y_mean`` where ``k(x)`` is the
kernel row against the training inputs, ``G`` spans the estimated envelope
and ``A = G^T Y_c^T (K + lam I)^{-1}``. Equivalently, the centered KENV fit is
the centered kernel ridge fit projected onto span(G).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import DataSet
from .envelope import (
    EnvelopeObjectiveInputs,
    _full_objective,
    conditional_moment,
    estimate_envelope,
    moment_inputs,
)
from .kernels import GramMatrix, KernelSpec, gram, kernel_matrix
from .linalg import CovEstimates, EnvelopeBasis, solve_regularized

FORMAT_VERSION = 1


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KenvModel:
    basis: EnvelopeBasis
    dual_coefs: np.ndarray  # u x n
    kernel: KernelSpec
    lam: float
    X_train: np.ndarray
    y_mean: np.ndarray
    cov: CovEstimates
    objective_value: float
    converged: bool = True
    method: str = "kenv"
    gram_fingerprint: str = ""
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def u(self):
        return self.basis.u

    @property
    def r(self):
        return self.basis.r

    def predict(self, X_new):
        return kenv_predict(self, X_new)


@dataclass(frozen=True)
class LambdaPath:
    lambdas: np.ndarray
    models: list

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=float)
        if np.any(np.diff(lams) >= 0):
            raise ValueError("lambda path must be strictly decreasing")


def _check_lambdas(lambdas):
    lams = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if lams.size == 0 or np.any(lams <= 0):
        raise ValueError("lambdas must be positive")
    if np.any(np.diff(lams) >= 0):
        raise ValueError("lambda path must be strictly decreasing")
    return lams


def _center(data: DataSet, center: bool):
    y_mean = data.Y.mean(axis=0) if center else np.zeros(data.r)
    return data.Y - y_mean, y_mean


def _assemble(basis, H, inputs: EnvelopeObjectiveInputs, S_Y, kernel, lam, X, y_mean,
              objective_value, converged, fp, method="kenv"):
    dual = basis.G.T @ H.T
    cov = CovEstimates.from_moments(basis, inputs.B, S_Y)
    return KenvModel(basis, dual, kernel, float(lam), X, y_mean, cov,
                     float(objective_value), bool(converged), method, fp)


def fit_from_solution(Y_c, y_mean, X, K: GramMatrix, lam, u, solve, init=None, basis=None):
    """Fit one model given a Gram matrix and a ``solve(lam, B)`` routine.

    Shared by the public fitting functions, the lambda path and the
    cross-validation loop. If ``basis`` is given, subspace estimation is
    skipped.
    """
    n, r = Y_c.shape
    H = solve(lam, Y_c)
    S_Y = Y_c.T @ Y_c / n
    inputs = moment_inputs(S_Y, conditional_moment(Y_c, H, lam), u)
    if basis is not None:
        value = _full_objective(inputs.A, inputs.B, basis.G)
        converged = True
    else:
        sol = estimate_envelope(inputs, init=init)
        basis, value, converged = sol.basis, sol.objective_value, sol.converged
    return _assemble(basis, H, inputs, 0.5 * (S_Y + S_Y.T), K.kernel, lam, X, y_mean,
                     value, converged, K.fingerprint)


def _cholesky_solver(K):
    return lambda lam, B: solve_regularized(K, lam, B)


def _warn_if_unconverged(model):
    if not model.converged:
        warnings.warn(f"envelope optimizer did not converge at lambda={model.lam:g}", ConvergenceWarning,
                      stacklevel=3)


def kenv_fit(data: DataSet, kernel: KernelSpec, u: int, lam: float,
             warm_init: EnvelopeBasis | None = None, center: bool = True) -> KenvModel:
    """Fit KENV with envelope dimension ``u`` and ridge penalty ``lam``.

    Non-convergence of the subspace optimizer is reported through
    ``model.converged`` (and a :class:`ConvergenceWarning`), not an error.
    """
    if data.n < 2:
        raise ValueError("need at least two observations")
    if not 1 <= u <= data.r:
        raise ValueError(f"envelope dimension must satisfy 1 <= u <= r={data.r}, got {u}")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    Y_c, y_mean = _center(data, center)
    K = gram(kernel, data.X)
    model = fit_from_solution(Y_c, y_mean, data.X.copy(), K, lam, u, _cholesky_solver(K), init=warm_init)
    _warn_if_unconverged(model)
    return model


def kenv_fit_fixed_basis(data: DataSet, kernel: KernelSpec, basis: EnvelopeBasis, lam: float,
                         center: bool = True) -> KenvModel:
    """Fit KENV with a known envelope basis; no subspace estimation."""
    if basis.r != data.r:
        raise ValueError(f"basis has {basis.r} rows but the data have {data.r} responses")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    Y_c, y_mean = _center(data, center)
    K = gram(kernel, data.X)
    return fit_from_solution(Y_c, y_mean, data.X.copy(), K, lam, basis.u, _cholesky_solver(K), basis=basis)


def kenv_predict(model: KenvModel, X_new) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=float)
    p = model.X_train.shape[1]
    if X_new.ndim == 1:
        X_new = X_new[:, None] if p == 1 else X_new[None, :]
    if X_new.shape[1] != p:
        raise ValueError(f"expected {p} predictors, got {X_new.shape[1]}")
    Kx = kernel_matrix(model.kernel, X_new, model.X_train)
    return (Kx @ model.dual_coefs.T) @ model.basis.G.T + model.y_mean


def kenv_path(data: DataSet, kernel: KernelSpec, u: int, lambdas, center: bool = True) -> LambdaPath:
    """Fit KENV along a decreasing lambda sequence.

    The Gram matrix is built once; each subspace estimate after the first is
    warm-started from the previous basis.
    """
    lams = _check_lambdas(lambdas)
    if not 1 <= u <= data.r:
        raise ValueError(f"envelope dimension must satisfy 1 <= u <= r={data.r}, got {u}")
    Y_c, y_mean = _center(data, center)
    K = gram(kernel, data.X)
    solve = _cholesky_solver(K)
    X = data.X.copy()
    models = []
    prev = None
    for lam in lams:
        m = fit_from_solution(Y_c, y_mean, X, K, lam, u, solve, init=prev)
        _warn_if_unconverged(m)
        models.append(m)
        prev = m.basis
    return LambdaPath(lams, models)


def default_lambda_grid(K, n_lambdas=30, ratio=1e-4):
    """Log-spaced grid from ``trace(K)/n`` down to ``ratio`` times that."""
    K = np.asarray(getattr(K, "values", K))
    lam_max = float(np.trace(K)) / K.shape[0]
    if not lam_max > 0:
        raise ValueError("Gram matrix has zero trace; supply a lambda grid")
    return np.geomspace(lam_max, lam_max * ratio, n_lambdas)


def envelope_penalty(model: KenvModel, K=None) -> float:
    """``tr{A K A^T Omega^{-1}}`` for the fitted coefficients."""
    K = gram(model.kernel, model.X_train).values if K is None else np.asarray(getattr(K, "values", K))
    A = model.dual_coefs
    return float(np.trace(A @ K @ A.T @ np.linalg.inv(model.cov.Omega)))


def envelope_penalty_by_rows(model: KenvModel, K=None) -> float:
    """The same penalty as a sum of squared RKHS norms.

    Row ``i`` of ``Omega^{-1/2}`` combines the coordinate functions into
    ``h_i = sum_j c_ij g_j = (c_i A) k(.)``, whose squared norm is the
    quadratic form ``(c_i A) K (c_i A)^T``.
    """
    K = gram(model.kernel, model.X_train).values if K is None else np.asarray(getattr(K, "values", K))
    vals, vecs = np.linalg.eigh(model.cov.Omega)
    root_inv = vecs @ np.diag(vals ** -0.5) @ vecs.T
    total = 0.0
    for c in root_inv:
        coef = c @ model.dual_coefs
        total += float(coef @ K @ coef)
    return total


# ---------------------------------------------------------------------------
# JSON persistence


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model: KenvModel) -> dict:
    return {
        "version": FORMAT_VERSION,
        "method": model.method,
        "kernel": model.kernel.to_dict(),
        "lambda": model.lam,
        "u": model.u,
        "y_mean": _arr(model.y_mean),
        "basis": {"G": _arr(model.basis.G), "G0": _arr(model.basis.G0)},
        "dual_coefs": _arr(model.dual_coefs),
        "X_train": _arr(model.X_train),
        "cov": {"Omega": _arr(model.cov.Omega), "Omega0": _arr(model.cov.Omega0), "Sigma": _arr(model.cov.Sigma)},
        "objective_value": model.objective_value if np.isfinite(model.objective_value) else None,
        "converged": model.converged,
        "gram_fingerprint": model.gram_fingerprint,
        "metadata": model.metadata,
    }


def model_from_dict(d: dict) -> KenvModel:
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')!r}")
    r = len(d["y_mean"])
    G = np.asarray(d["basis"]["G"], dtype=float).reshape(r, -1)
    G0 = np.asarray(d["basis"]["G0"], dtype=float).reshape(r, -1)
    u = G.shape[1]
    X = np.asarray(d["X_train"], dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    cov = d["cov"]
    obj = d.get("objective_value")
    return KenvModel(
        EnvelopeBasis(G, G0),
        np.asarray(d["dual_coefs"], dtype=float).reshape(u, X.shape[0]),
        KernelSpec.from_dict(d["kernel"]),
        float(d["lambda"]),
        X,
        np.asarray(d["y_mean"], dtype=float),
        CovEstimates(np.asarray(cov["Omega"], dtype=float).reshape(u, u),
                     np.asarray(cov["Omega0"], dtype=float).reshape(r - u, r - u),
                     np.asarray(cov["Sigma"], dtype=float).reshape(r, r)),
        float("inf") if obj is None else float(obj),
        bool(d.get("converged", True)),
        d.get("method", "kenv"),
        d.get("gram_fingerprint", ""),
        dict(d.get("metadata") or {}),
    )


def save_model(model: KenvModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> KenvModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def krr_as_kenv(data: DataSet, kernel: KernelSpec, lam: float, center: bool = True) -> KenvModel:
    """Kernel ridge regression expressed as the ``u = r`` KENV model."""
    model = kenv_fit_fixed_basis(data, kernel, EnvelopeBasis.identity(data.r), lam, center=center)
    return KenvModel(model.basis, model.dual_coefs, model.kernel, model.lam, model.X_train, model.y_mean,
                     model.cov, model.objective_value, True, "krr", model.gram_fingerprint)
