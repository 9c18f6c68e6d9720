"""Simulation benchmarks: generate, tune by inner cross-validation, score on a test set."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import DataSet, format_float
from .kernels import KernelFamily
from .simulate import (
    Truth,
    draw_predictors,
    draw_responses,
    draw_test_predictors,
    envelope_structure,
    eval_metrics,
    gen_envelope_data,
    resolve_g,
    scenario_spec,
    _streams,
)
from .tuning import CvConfig, cv_search, refit

METHODS = ("kenv-gaussian", "krr-gaussian", "kenv-laplacian", "krr-laplacian", "kenv-linear", "krr-linear")
METHOD_LABELS = {
    "kenv-gaussian": "KENV(G)",
    "krr-gaussian": "KRR(G)",
    "kenv-laplacian": "KENV(L)",
    "krr-laplacian": "KRR(L)",
    "kenv-linear": "EENV",
    "krr-linear": "RR",
}


def parse_method(name):
    """Split ``"kenv-gaussian"`` into ``("kenv", KernelFamily.GAUSSIAN)``."""
    try:
        estimator, family = name.split("-", 1)
        family = KernelFamily(family)
    except ValueError:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}") from None
    if estimator not in ("kenv", "krr"):
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return estimator, family


@dataclass
class BenchConfig:
    scenario: str = "model1"
    n: int = 400
    reps: int = 100
    methods: tuple = ("kenv-gaussian", "krr-gaussian")
    n_test: int = 2000
    folds: int = 5
    seed: int = 0
    p: int = 10
    rho: float = 0.0
    threads: int = 1
    lambda_grid: list | None = None
    sigma_grid: list | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("need at least one replication")
        if not self.methods:
            raise ValueError("method list is empty")
        for m in self.methods:
            parse_method(m)
        scenario_spec(self.scenario, self.n, self.p, self.rho)


def replication_seeds(seed, rep):
    """Independent seed sequences for one replication's data and its CV folds."""
    data = np.random.SeedSequence(seed, spawn_key=(rep, 0))
    folds = np.random.SeedSequence(seed, spawn_key=(rep, 1))
    return data, folds


def _families(methods):
    """Kernel family -> whether any KENV method (needing the full u grid) uses it."""
    out = {}
    for m in methods:
        est, fam = parse_method(m)
        out[fam] = out.get(fam, False) or est == "kenv"
    return out


def fit_methods(data: DataSet, methods, folds, fold_seed, lambda_grid=None, sigma_grid=None):
    """Tune and refit each method on ``data``.

    Both estimators of a kernel family share one CV table: KRR is the best
    ``u = r`` cell of the same search. Returns ``{method: (model, cell)}``.
    """
    out = {}
    for fam, needs_u in _families(methods).items():
        config = CvConfig(folds=folds, seed=fold_seed, lambda_grid=lambda_grid, sigma_grid=sigma_grid,
                          u_grid=None if needs_u else [data.r])
        report = cv_search(data, fam, config)
        for est in ("kenv", "krr"):
            name = f"{est}-{fam.value}"
            if name in methods:
                cell = report.selected if est == "kenv" else report.best([data.r])
                out[name] = (refit(data, report, cell), cell)
    return out


def run_replication(config: BenchConfig, rep: int) -> list:
    data_seed, fold_seed = replication_seeds(config.seed, rep)
    spec = scenario_spec(config.scenario, config.n, config.p, config.rho, seed=data_seed)
    draw = gen_envelope_data(spec)
    X_test = draw_test_predictors(draw, config.n_test)
    f_test = draw.truth.f(X_test)
    rows = []
    for name, (model, cell) in fit_methods(draw.data, config.methods, config.folds, fold_seed,
                                           config.lambda_grid, config.sigma_grid).items():
        metrics = eval_metrics(model.predict(X_test), f_test)
        rows.append({"rep": rep, "method": name, "mse": metrics["mse"], "mae": metrics["mae"],
                     "u": cell.u, "true_u": spec.u, "lambda": cell.lam, "sigma": cell.sigma})
    return rows


def _run_one(args):
    return run_replication(*args)


@dataclass
class MethodSummary:
    method: str
    mse: float
    mse_se: float
    mae: float
    mae_se: float
    u_rate: float | None


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    se = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else math.nan
    return float(np.mean(values)), se


@dataclass
class BenchResult:
    config: BenchConfig
    rows: list = field(default_factory=list)

    def method_rows(self, method):
        return [r for r in self.rows if r["method"] == method]

    def summary(self) -> list:
        out = []
        for m in self.config.methods:
            rows = self.method_rows(m)
            mse, mse_se = _mean_se([r["mse"] for r in rows])
            mae, mae_se = _mean_se([r["mae"] for r in rows])
            u_rate = (float(np.mean([r["u"] == r["true_u"] for r in rows]))
                      if parse_method(m)[0] == "kenv" else None)
            out.append(MethodSummary(m, mse, mse_se, mae, mae_se, u_rate))
        return out

    def table(self, digits=2) -> str:
        """Plain-text table with one column per method: MSE and MAE as mean (SE), then #u."""
        summ = self.summary()

        def cell(mean, se):
            return f"{mean:.{digits}f} ({'NA' if math.isnan(se) else f'{se:.{digits}f}'})"

        header = [""] + [METHOD_LABELS.get(s.method, s.method) for s in summ]
        body = [
            ["MSE"] + [cell(s.mse, s.mse_se) for s in summ],
            ["MAE"] + [cell(s.mae, s.mae_se) for s in summ],
            ["#u"] + ["-" if s.u_rate is None else f"{s.u_rate:.{digits}f}" for s in summ],
        ]
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in [header] + body]
        return "\n".join(lines)

    def write_csv(self, path):
        cols = ["rep", "method", "mse", "mae", "u", "true_u", "lambda", "sigma"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in sorted(self.rows, key=lambda r: (r["rep"], self.config.methods.index(r["method"]))):
                w.writerow([format_float(r[c]) if isinstance(r[c], float) else ("" if r[c] is None else r[c])
                            for c in cols])

    def write_summary_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "mse", "mse_se", "mae", "mae_se", "u_rate"])
            for s in self.summary():
                w.writerow([s.method] + [("NA" if v is None or math.isnan(v) else format_float(v))
                                         for v in (s.mse, s.mse_se, s.mae, s.mae_se, s.u_rate)])


def run_bench(config: BenchConfig) -> BenchResult:
    """Run all replications; results do not depend on the number of workers."""
    jobs = [(config, rep) for rep in range(config.reps)]
    if config.threads > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(_run_one, jobs))
    else:
        chunks = [_run_one(j) for j in jobs]
    rows = [row for chunk in chunks for row in chunk]
    return BenchResult(config, rows)


# ---------------------------------------------------------------------------
# fitted curves over a fixed design


@dataclass
class CurveResult:
    x_grid: np.ndarray
    truth: np.ndarray  # grid x r
    fits: dict  # method -> reps x grid x r
    X: np.ndarray

    def bands(self, method):
        fits = self.fits[method]
        mean = fits.mean(axis=0)
        sd = fits.std(axis=0, ddof=1) if fits.shape[0] > 1 else np.full_like(mean, np.nan)
        return mean, sd

    def write_summary_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "component", "x", "truth", "mean", "sd", "lower", "upper"])
            for method in self.fits:
                mean, sd = self.bands(method)
                for j in range(self.truth.shape[1]):
                    for i, x in enumerate(self.x_grid):
                        w.writerow([method, j + 1] + [format_float(float(v)) for v in (
                            x, self.truth[i, j], mean[i, j], sd[i, j],
                            mean[i, j] - 2 * sd[i, j], mean[i, j] + 2 * sd[i, j])])

    def write_fits_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "rep", "component", "x", "fit"])
            for method, fits in self.fits.items():
                for rep in range(fits.shape[0]):
                    for j in range(fits.shape[2]):
                        for i, x in enumerate(self.x_grid):
                            w.writerow([method, rep, j + 1, format_float(float(x)), format_float(float(fits[rep, i, j]))])


def run_curves(scenario="model2", n=200, reps=100, methods=("kenv-gaussian", "krr-gaussian"),
               folds=5, seed=0, grid_size=200, lambda_grid=None, sigma_grid=None) -> CurveResult:
    """Refit on fresh response noise over one fixed design and envelope.

    The predictors and the envelope basis are drawn once; each replication
    redraws only the errors, tunes every method by cross-validation and
    records its fitted curves on an even grid over the predictor range.
    """
    spec = scenario_spec(scenario, n, seed=seed)
    if spec.p != 1:
        raise ValueError("fitted curves need a single-predictor scenario")
    streams = _streams(spec.seed)
    g = resolve_g(spec, streams["rfg"])
    Gamma, Gamma0, Sigma = envelope_structure(spec, np.random.default_rng(streams["V"]))
    truth = Truth(Gamma, Gamma0, spec.Omega, spec.Omega0, Sigma, g)
    X = draw_predictors(spec, n, np.random.default_rng(streams["X"]))
    x_grid = np.linspace(-5.0, 5.0, grid_size)
    fits = {m: np.empty((reps, grid_size, spec.r)) for m in methods}
    for rep in range(reps):
        eps_seed, fold_seed = replication_seeds(seed, rep)
        Y = draw_responses(truth, X, np.random.default_rng(eps_seed))
        fitted = fit_methods(DataSet(Y, X), methods, folds, fold_seed, lambda_grid, sigma_grid)
        for m, (model, _) in fitted.items():
            fits[m][rep] = model.predict(x_grid[:, None])
    return CurveResult(x_grid, truth.f(x_grid[:, None]), fits, X)


__all__ = [
    "METHODS",
    "BenchConfig",
    "BenchResult",
    "CurveResult",
    "MethodSummary",
    "fit_methods",
    "parse_method",
    "replication_seeds",
    "run_bench",
    "run_curves",
    "run_replication",
]
