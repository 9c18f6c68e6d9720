"""Command-line interface: ``kenv {fit,predict,cv,simulate,bench,curves}``.

Exit codes: 0 on success, 2 for bad input (arguments, CSV layout, values),
3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bench import METHODS, BenchConfig, parse_method, run_bench, run_curves
from .data import DataSet, InputError, read_dataset, read_table, write_table
from .kenv import kenv_fit, krr_as_kenv, load_model, save_model
from .kernels import KernelFamily, KernelSpec, median_heuristic_bandwidth
from .simulate import draw_test_predictors, gen_envelope_data, scenario_spec, truth_to_dict
from .tuning import CvConfig, cv_search, refit

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text):
    names = [v.strip() for v in text.split(",") if v.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected at least one column name")
    return names


def _methods(text):
    names = _names(text)
    for m in names:
        try:
            parse_method(m)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return tuple(names)


def _kernel_spec(family, param, X):
    family = KernelFamily(family)
    if family in (KernelFamily.LINEAR, KernelFamily.EXPONENTIAL):
        return KernelSpec(family, None)
    if param is None:
        if family is KernelFamily.POLYNOMIAL:
            raise InputError("the polynomial kernel needs --sigma (its degree)")
        param = median_heuristic_bandwidth(X)
    if family is KernelFamily.POLYNOMIAL:
        if float(param) != int(param):
            raise InputError("polynomial degree must be an integer")
        param = int(param)
    return KernelSpec(family, param)


def _standardize(data: DataSet, on):
    """Z-score the responses; returns the data and the (mean, scale) used."""
    if not on:
        return data, None
    mean = data.Y.mean(axis=0)
    scale = data.Y.std(axis=0, ddof=1) if data.n > 1 else np.ones(data.r)
    if np.any(scale == 0):
        raise InputError("cannot standardize a constant response column")
    return DataSet((data.Y - mean) / scale, data.X, data.response_names, data.predictor_names), (mean, scale)


def _attach_metadata(model, data, scaling):
    model.metadata["responses"] = list(data.response_names)
    model.metadata["predictors"] = list(data.predictor_names)
    if scaling is not None:
        model.metadata["response_mean"] = scaling[0].tolist()
        model.metadata["response_scale"] = scaling[1].tolist()
    return model


def _predict_original_scale(model, X):
    pred = model.predict(X)
    if "response_scale" in model.metadata:
        pred = pred * np.asarray(model.metadata["response_scale"]) + np.asarray(model.metadata["response_mean"])
    return pred


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args):
    data = read_dataset(args.input, args.responses, args.predictors)
    data_fit, scaling = _standardize(data, args.standardize)
    kernel = _kernel_spec(args.kernel, args.sigma, data.X)
    if args.lam is None:
        raise InputError("fit needs --lambda (use the cv command to tune it)")
    if args.method == "krr":
        model = krr_as_kenv(data_fit, kernel, args.lam, center=not args.no_center)
    else:
        if args.u is None:
            raise InputError("fit --method kenv needs --u")
        if not 1 <= args.u <= data.r:
            raise InputError(f"--u must lie in 1..{data.r}")
        model = kenv_fit(data_fit, kernel, args.u, args.lam, center=not args.no_center)
    _attach_metadata(model, data, scaling)
    save_model(model, args.out)
    resid = data.Y - _predict_original_scale(model, data.X)
    mse = float(np.mean(np.sum(resid ** 2, axis=1)))
    print(f"method={model.method} u={model.u} lambda={model.lam:.6g} "
          f"kernel={kernel.family.value} param={kernel.param} objective={model.objective_value:.6g} "
          f"train_mse={mse:.6g} converged={model.converged}")
    print(f"model written to {args.out}")


def cmd_predict(args):
    try:
        model = load_model(args.model)
    except (OSError, KeyError, json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"cannot load model {args.model}: {exc}") from exc
    header, values = read_table(args.input)
    predictors = model.metadata.get("predictors") or header[: model.X_train.shape[1]]
    missing = [c for c in predictors if c not in header]
    if missing:
        raise InputError(f"{args.input}: predictor columns not found: {missing}")
    X = values[:, [header.index(c) for c in predictors]].reshape(-1, len(predictors))
    pred = _predict_original_scale(model, X)
    names = model.metadata.get("responses") or [f"y{j + 1}" for j in range(model.r)]
    write_table(args.out, names, [list(map(float, row)) for row in pred])
    print(f"{pred.shape[0]} predictions written to {args.out}")


def cmd_cv(args):
    data = read_dataset(args.input, args.responses, args.predictors)
    data_fit, scaling = _standardize(data, args.standardize)
    sigma_grid = args.sigma_grid if args.sigma_grid is not None else ([args.sigma] if args.sigma is not None else None)
    lambda_grid = args.lambda_grid if args.lambda_grid is not None else ([args.lam] if args.lam is not None else None)
    u_grid = args.u_grid if args.u_grid is not None else ([args.u] if args.u is not None else None)
    if args.method == "krr":
        u_grid = [data.r]
    config = CvConfig(folds=args.folds, u_grid=u_grid, lambda_grid=lambda_grid, sigma_grid=sigma_grid,
                      seed=args.seed, loss=args.loss)
    report = cv_search(data_fit, args.kernel, config, center=not args.no_center)
    out = _ensure_dir(args.out)
    report.write_csv(os.path.join(out, "cv_table.csv"))
    report.write_json(os.path.join(out, "cv_summary.json"))
    s = report.selected
    print(f"selected u={s.u} lambda={s.lam:.6g} sigma={s.sigma} cv_loss={s.mean:.6g} (se {s.se:.3g})")
    if args.refit:
        model = _attach_metadata(refit(data_fit, report, center=not args.no_center), data, scaling)
        save_model(model, os.path.join(out, "model.json"))
        print(f"refitted model written to {os.path.join(out, 'model.json')}")


def cmd_simulate(args):
    spec = scenario_spec(args.scenario, args.n, args.p, args.rho, seed=args.seed)
    draw = gen_envelope_data(spec)
    out = _ensure_dir(args.out)
    d = draw.data
    header = d.response_names + d.predictor_names
    write_table(os.path.join(out, "data.csv"), header, np.hstack([d.Y, d.X]).tolist())
    with open(os.path.join(out, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth_to_dict(draw), fh, indent=1)
        fh.write("\n")
    if args.n_test:
        X_test = draw_test_predictors(draw, args.n_test)
        f_test = draw.truth.f(X_test)
        write_table(os.path.join(out, "test.csv"), [f"f{j + 1}" for j in range(d.r)] + d.predictor_names,
                    np.hstack([f_test, X_test]).tolist())
    print(f"{args.scenario}: n={d.n} r={d.r} p={d.p} written to {out}")


def cmd_bench(args):
    config = BenchConfig(args.scenario, args.n, args.reps, args.methods, args.n_test, args.folds, args.seed,
                         args.p, args.rho, args.threads, args.lambda_grid, args.sigma_grid)
    result = run_bench(config)
    out = _ensure_dir(args.out)
    result.write_csv(os.path.join(out, "bench_reps.csv"))
    result.write_summary_csv(os.path.join(out, "bench_summary.csv"))
    table = result.table()
    with open(os.path.join(out, "bench_table.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(f"{args.scenario} n={args.n} reps={args.reps}")
    print(table)


def cmd_curves(args):
    result = run_curves(args.scenario, args.n, args.reps, args.methods, args.folds, args.seed, args.grid_size,
                        args.lambda_grid, args.sigma_grid)
    out = _ensure_dir(args.out)
    result.write_summary_csv(os.path.join(out, "curves_summary.csv"))
    result.write_fits_csv(os.path.join(out, "curves_fits.csv"))
    write_table(os.path.join(out, "design.csv"), ["x1"], result.X.tolist())
    print(f"fitted curves for {', '.join(result.fits)} over {args.reps} replications written to {out}")


# ---------------------------------------------------------------------------
# argument parsing


def _add_data_args(p):
    p.add_argument("input", help="CSV file with a header row")
    p.add_argument("--responses", type=_names, required=True, help="comma-separated response column names")
    p.add_argument("--predictors", type=_names, default=None,
                   help="comma-separated predictor columns (default: all non-response columns)")
    p.add_argument("--standardize", action="store_true", help="z-score the responses before fitting")
    p.add_argument("--no-center", action="store_true", help="do not center the responses")


def _add_kernel_args(p):
    p.add_argument("--kernel", default="gaussian", choices=[f.value for f in KernelFamily])
    p.add_argument("--sigma", type=float, default=None,
                   help="bandwidth (polynomial: degree); default median heuristic")


def _add_grid_args(p):
    p.add_argument("--sigma-grid", type=_floats, default=None)
    p.add_argument("--lambda-grid", type=_floats, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="kenv", description="Kernel envelope regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model and save it as JSON")
    _add_data_args(p)
    _add_kernel_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--u", type=int, default=None, help="envelope dimension")
    p.add_argument("--method", choices=["kenv", "krr"], default="kenv")
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("model")
    p.add_argument("input", help="CSV holding the model's predictor columns")
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="tune u, lambda and sigma by cross-validation")
    _add_data_args(p)
    _add_kernel_args(p)
    _add_grid_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--u", type=int, default=None)
    p.add_argument("--u-grid", type=_ints, default=None)
    p.add_argument("--method", choices=["kenv", "krr"], default="kenv")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--loss", choices=["squared", "absolute"], default="squared")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--refit", action="store_true", help="refit on all data at the selected cell")
    p.add_argument("--out", default="cv_out")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="write one synthetic data set and its truth")
    p.add_argument("--scenario", choices=["model1", "model2", "rfg"], default="model1")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=10, help="predictors (rfg only)")
    p.add_argument("--rho", type=float, default=0.0, help="AR(1) predictor correlation (rfg only)")
    p.add_argument("--n-test", type=int, default=0, help="also write a test set of this size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sim_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="replicated simulation benchmark")
    p.add_argument("--scenario", choices=["model1", "model2", "rfg"], default="model1")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", type=_methods, default=METHODS)
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _add_grid_args(p)
    p.add_argument("--out", default="bench_out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("curves", help="fitted curves over a fixed design")
    p.add_argument("--scenario", choices=["model1", "model2"], default="model2")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", type=_methods, default=("kenv-gaussian", "krr-gaussian"))
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=200)
    _add_grid_args(p)
    p.add_argument("--out", default="curves_out")
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        args.func(args)
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
