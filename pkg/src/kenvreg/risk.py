"""In-sample prediction risk of KRR and fixed-basis KENV: closed form and Monte Carlo.

With an uncentered fit ``f_hat(X) = K (K + lam I)^{-1} Y`` and errors of
covariance ``Sigma = G Omega G^T + G0 Omega0 G0^T``, the expected squared
Frobenius error at the design splits into a bias term shared by both
estimators and a variance term. Projecting onto the true envelope removes
the immaterial share ``tr(Omega0) * tr{K (K + lam I)^{-2} K}`` of the
variance and leaves the bias unchanged, because the true mean already lies
in the envelope. Only meaningful in simulations, where the truth is known.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import DataSet, format_float
from .kenv import kenv_fit_fixed_basis
from .kernels import KernelSpec, gram, median_heuristic_bandwidth
from .linalg import EnvelopeBasis, SpectralGram
from .simulate import SimSpec, Truth, _streams, draw_predictors, draw_responses, envelope_structure, resolve_g

METHODS = ("krr", "kenv-fixed")


@dataclass(frozen=True)
class RiskReport:
    """Risk with its bias/variance split.

    For a closed-form report the ``analytic_*`` fields repeat the main ones
    and ``reps`` is 0. For a Monte Carlo report the main fields are
    empirical (``risk = bias_sq + variance`` holds exactly for them too) and
    ``risk_se`` is the standard error of the mean loss.
    """

    method: str
    bias_sq: float
    variance: float
    risk: float
    analytic_bias_sq: float
    analytic_variance: float
    analytic_risk: float
    risk_se: float = 0.0
    reps: int = 0

    def to_dict(self):
        return asdict(self)

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["field", "value"])
            for k, v in self.to_dict().items():
                w.writerow([k, format_float(v) if isinstance(v, float) else v])


def _check_method(method):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def shrinkage_bias_sq(spectral: SpectralGram, lam, f_X) -> float:
    """``||lam (K + lam I)^{-1} f(X)||_F^2``."""
    coef = spectral.Q.T @ f_X
    scale = (lam / (spectral.gamma + lam))[:, None]
    return float(np.sum((scale * coef) ** 2))


def analytic_in_sample_risk(K, lam, f_true_at_X, Omega, Omega0, basis: EnvelopeBasis, method) -> RiskReport:
    """Closed-form bias, variance and risk for ``"krr"`` or ``"kenv-fixed"``.

    The bias computation is shared verbatim between the two methods, so
    their ``bias_sq`` values agree to the bit.
    """
    _check_method(method)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    K = np.asarray(getattr(K, "values", K), dtype=float)
    f_X = np.asarray(f_true_at_X, dtype=float)
    Omega = np.atleast_2d(np.asarray(Omega, dtype=float))
    Omega0 = np.asarray(Omega0, dtype=float).reshape(basis.r - basis.u, basis.r - basis.u)
    n = K.shape[0]
    if K.shape != (n, n) or f_X.shape != (n, basis.r):
        raise ValueError(f"shapes disagree: K {K.shape}, f(X) {f_X.shape}, r={basis.r}")
    if Omega.shape != (basis.u, basis.u):
        raise ValueError(f"Omega must be {basis.u}x{basis.u}")
    spectral = SpectralGram(K)
    bias_sq = shrinkage_bias_sq(spectral, lam, f_X)
    shrink = spectral.shrinkage_trace(lam)
    noise = np.trace(Omega) + (np.trace(Omega0) if method == "krr" else 0.0)
    variance = float(noise * shrink)
    risk = bias_sq + variance
    return RiskReport(method, bias_sq, variance, risk, bias_sq, variance, risk)


def risk_gap(K, lam, Omega0) -> float:
    """``tr(Omega0) * tr{K (K + lam I)^{-2} K}``: how much lower the KENV risk is."""
    K = np.asarray(getattr(K, "values", K), dtype=float)
    return float(np.trace(np.atleast_2d(Omega0)) * SpectralGram(K).shrinkage_trace(lam))


def _rep_seed(ss: np.random.SeedSequence, rep):
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (rep,))


def monte_carlo_in_sample_risk(spec: SimSpec, lam, method, reps=500, kernel: KernelSpec | None = None,
                               fit_basis: EnvelopeBasis | None = None) -> RiskReport:
    """Average in-sample loss over fresh error draws at a fixed design.

    The predictors and the envelope basis are drawn once from ``spec.seed``;
    each replication redraws only the errors and refits without centering,
    with the true basis for ``"kenv-fixed"`` and the identity for ``"krr"``.
    ``kernel`` defaults to a Gaussian kernel at the median-heuristic bandwidth.
    ``fit_basis`` overrides the basis used for ``"kenv-fixed"`` fits; the
    analytic counterpart still refers to the true basis.
    """
    _check_method(method)
    if reps < 100:
        raise ValueError("need at least 100 replications")
    streams = _streams(spec.seed)
    g = resolve_g(spec, streams["rfg"])
    Gamma, Gamma0, Sigma = envelope_structure(spec, np.random.default_rng(streams["V"]))
    truth = Truth(Gamma, Gamma0, spec.Omega, spec.Omega0, Sigma, g)
    X = draw_predictors(spec, spec.n, np.random.default_rng(streams["X"]))
    if kernel is None:
        kernel = KernelSpec.gaussian(median_heuristic_bandwidth(X))
    f_X = truth.f(X)
    true_basis = EnvelopeBasis(Gamma, Gamma0)
    if method == "krr":
        fit_basis = EnvelopeBasis.identity(spec.r)
    elif fit_basis is None:
        fit_basis = true_basis
    elif fit_basis.r != spec.r:
        raise ValueError(f"fit_basis must live in R^{spec.r}")

    fits = np.empty((reps,) + f_X.shape)
    for rep in range(reps):
        Y = draw_responses(truth, X, np.random.default_rng(_rep_seed(streams["eps"], rep)))
        model = kenv_fit_fixed_basis(DataSet(Y, X), kernel, fit_basis, lam, center=False)
        fits[rep] = model.predict(X)

    losses = np.sum((fits - f_X) ** 2, axis=(1, 2))
    mean_fit = fits.mean(axis=0)
    bias_sq = float(np.sum((mean_fit - f_X) ** 2))
    variance = float(np.sum((fits - mean_fit) ** 2) / reps)
    analytic = analytic_in_sample_risk(gram(kernel, X), lam, f_X, spec.Omega, spec.Omega0, true_basis, method)
    return RiskReport(method, bias_sq, variance, bias_sq + variance,
                      analytic.bias_sq, analytic.variance, analytic.risk,
                      float(np.std(losses, ddof=1) / np.sqrt(reps)), reps)


__all__ = [
    "METHODS",
    "RiskReport",
    "analytic_in_sample_risk",
    "monte_carlo_in_sample_risk",
    "risk_gap",
    "shrinkage_bias_sq",
]
