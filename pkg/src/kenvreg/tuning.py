"""M-fold cross-validation over envelope dimension, ridge penalty and bandwidth."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataSet
from .envelope import conditional_moment, estimate_envelope, moment_inputs
from .kenv import KenvModel, kenv_fit, krr_as_kenv
from .kernels import PARAMETER_FREE, KernelFamily, KernelSpec, default_sigma_grid, gram, kernel_matrix
from .linalg import SpectralGram

LOSSES = ("squared", "absolute")


def make_folds(n, M, seed=None) -> np.ndarray:
    """Random fold labels in ``0..M-1``; fold sizes differ by at most one."""
    if M < 2:
        raise ValueError("need at least two folds")
    if M > n:
        raise ValueError(f"cannot split {n} observations into {M} folds")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    for m, idx in enumerate(np.array_split(perm, M)):
        labels[idx] = m
    return labels


@dataclass
class CvConfig:
    """Cross-validation settings. ``None`` grids are filled with defaults.

    Default u grid is ``1..r``; default sigma grid is the median-heuristic
    bandwidth times {1/4, 1/2, 1, 2, 4} (degrees {1, 2, 3} for the
    polynomial kernel); default lambda grid is 30 log-spaced values from
    ``trace(K)/n`` down by a factor 1e4, with ``K`` the full-data Gram
    matrix for that sigma.
    """

    folds: int = 5
    u_grid: list | None = None
    lambda_grid: list | None = None
    sigma_grid: list | None = None
    seed: int | None = 0
    loss: str = "squared"
    n_lambdas: int = 30

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least two folds")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.u_grid is not None and len(self.u_grid) == 0:
            raise ValueError("u grid is empty")
        if self.lambda_grid is not None:
            if len(self.lambda_grid) == 0 or min(self.lambda_grid) <= 0:
                raise ValueError("lambda grid must hold positive values")


@dataclass
class CvCell:
    u: int
    lam: float
    sigma: float | None
    mean: float
    se: float
    fold_losses: list


@dataclass
class CvReport:
    cells: list
    selected: CvCell
    family: KernelFamily
    folds: int
    r: int
    records: list = field(default_factory=list, repr=False)

    @property
    def selected_u(self):
        return self.selected.u

    def best(self, u_values=None) -> CvCell:
        """Best cell, optionally restricted to a set of envelope dimensions."""
        return select_cell(self.cells if u_values is None else [c for c in self.cells if c.u in set(u_values)])

    def kernel(self, cell=None) -> KernelSpec:
        cell = cell or self.selected
        return KernelSpec(self.family, cell.sigma)

    def to_dict(self):
        def cell_dict(c):
            return {"u": c.u, "lambda": c.lam, "sigma": c.sigma,
                    "mean_loss": _finite_or_none(c.mean), "se": _finite_or_none(c.se)}

        return {
            "kernel": self.family.value,
            "folds": self.folds,
            "selected": cell_dict(self.selected),
            "selected_u": self.selected_u,
            "cells": [cell_dict(c) for c in self.cells],
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "lambda", "sigma", "fold", "loss"])
            for u, lam, sigma, fold, loss in self.records:
                w.writerow([u, repr(lam), "" if sigma is None else repr(sigma), fold, repr(loss)])


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


def select_cell(cells) -> CvCell:
    """Minimum mean loss; ties go to smallest u, then largest lambda, then smallest sigma."""
    finite = [c for c in cells if np.isfinite(c.mean)]
    if not finite:
        raise RuntimeError("every cross-validation cell failed")
    best = min(c.mean for c in finite)
    tied = [c for c in finite if c.mean <= best + 1e-12 * max(1.0, abs(best))]
    return min(tied, key=lambda c: (c.u, -c.lam, -np.inf if c.sigma is None else c.sigma))


def kernel_diagonal(spec: KernelSpec, X):
    return np.array([kernel_matrix(spec, x[None, :], x[None, :])[0, 0] for x in np.atleast_2d(X)])


def default_lambdas(spec: KernelSpec, X, n_lambdas=30, ratio=1e-4):
    lam_max = float(np.mean(kernel_diagonal(spec, X)))
    if not lam_max > 0:
        raise ValueError("kernel has zero trace on these data; supply a lambda grid")
    return np.geomspace(lam_max, lam_max * ratio, n_lambdas)


def _sigma_grid(family, X, config):
    if family in PARAMETER_FREE:
        return [None]
    if config.sigma_grid is not None:
        if len(config.sigma_grid) == 0:
            raise ValueError(f"{family.value} kernel needs a non-empty sigma grid")
        return list(config.sigma_grid)
    if family is KernelFamily.POLYNOMIAL:
        return [1, 2, 3]
    return default_sigma_grid(X)


def _pointwise_loss(resid, loss):
    return np.sum(resid * resid, axis=1) if loss == "squared" else np.sum(np.abs(resid), axis=1)


def fold_path(data: DataSet, train, test, kernel: KernelSpec, lambdas, u_grid, loss="squared", center=True):
    """Fit the warm-started lambda path on one training fold and score the held-out rows.

    ``lambdas`` must be strictly decreasing. Returns ``(losses, bases)``
    where ``losses[(u, i)]`` is the summed held-out loss at ``lambdas[i]``
    (``inf`` if the fit failed) and ``bases[(u, i)]`` the fitted basis.
    """
    Y_tr, X_tr = data.Y[train], data.X[train]
    y_mean = Y_tr.mean(axis=0) if center else np.zeros(data.r)
    Y_c = Y_tr - y_mean
    n, r = Y_c.shape
    K = gram(kernel, X_tr)
    solver = SpectralGram(K)
    K_te = kernel_matrix(kernel, data.X[test], X_tr)
    Y_te = data.Y[test]
    S_Y = Y_c.T @ Y_c / n
    prev = {u: None for u in u_grid}
    losses, bases = {}, {}
    for i, lam in enumerate(lambdas):
        H = solver.solve(lam, Y_c)
        pred_c = K_te @ H
        S_YK = conditional_moment(Y_c, H, lam)
        for u in u_grid:
            try:
                if u == r:
                    G = np.eye(r)
                else:
                    sol = estimate_envelope(moment_inputs(S_Y, S_YK, u), init=prev[u])
                    prev[u] = sol.basis
                    G = sol.basis.G
                pred = pred_c @ G @ G.T + y_mean
                value = float(np.sum(_pointwise_loss(Y_te - pred, loss)))
                losses[(u, i)] = value if np.isfinite(value) else math.inf
                bases[(u, i)] = G
            except np.linalg.LinAlgError:
                prev[u] = None
                losses[(u, i)] = math.inf
    return losses, bases


def cv_search(data: DataSet, kernel_family, config: CvConfig | None = None, center=True) -> CvReport:
    """Grid search over (u, lambda, sigma) by M-fold cross-validation.

    For each (sigma, fold) the training Gram matrix is built and
    eigendecomposed once; the lambda path then runs from the largest value
    down with warm-started subspace estimates for every u. The cell score is
    the held-out loss pooled over all folds and divided by n.
    """
    config = config or CvConfig()
    family = KernelFamily(kernel_family)
    r = data.r
    u_grid = sorted(set(config.u_grid)) if config.u_grid is not None else list(range(1, r + 1))
    if min(u_grid) < 1 or max(u_grid) > r:
        raise ValueError(f"u grid must lie in 1..{r}")
    labels = make_folds(data.n, config.folds, config.seed)
    if data.n - np.bincount(labels, minlength=config.folds).max() < 2:
        raise ValueError("every training fold needs at least two observations")

    cells, records = [], []
    for sigma in _sigma_grid(family, data.X, config):
        kernel = KernelSpec(family, sigma)
        grid = (np.asarray(config.lambda_grid, dtype=float) if config.lambda_grid is not None
                else default_lambdas(kernel, data.X, config.n_lambdas))
        lams = np.unique(grid)[::-1]
        fold_sums = {(u, i): np.zeros(config.folds) for u in u_grid for i in range(len(lams))}
        fold_sizes = np.zeros(config.folds)
        for m in range(config.folds):
            test = np.flatnonzero(labels == m)
            train = np.flatnonzero(labels != m)
            fold_sizes[m] = len(test)
            losses, _ = fold_path(data, train, test, kernel, lams, u_grid, config.loss, center)
            for key, v in losses.items():
                fold_sums[key][m] = v
        for u in u_grid:
            for i, lam in enumerate(lams):
                sums = fold_sums[(u, i)]
                per_fold = sums / fold_sizes
                if np.all(np.isfinite(sums)):
                    mean = float(np.sum(sums) / data.n)
                    se = float(np.std(per_fold, ddof=1) / np.sqrt(config.folds))
                else:
                    mean = se = math.inf
                cells.append(CvCell(u, float(lam), sigma, mean, se, per_fold.tolist()))
                for m in range(config.folds):
                    records.append((u, float(lam), sigma, m, float(per_fold[m])))
    return CvReport(cells, select_cell(cells), family, config.folds, r, records)


def refit(data: DataSet, report: CvReport, cell: CvCell | None = None, center=True) -> KenvModel:
    """Fit on all of ``data`` at a chosen cell (the selected one by default)."""
    cell = cell or report.selected
    kernel = report.kernel(cell)
    if cell.u == data.r:
        return krr_as_kenv(data, kernel, cell.lam, center=center)
    return kenv_fit(data, kernel, cell.u, cell.lam, center=center)
