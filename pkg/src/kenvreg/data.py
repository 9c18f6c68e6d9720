"""Paired response/predictor blocks and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class InputError(ValueError):
    """Malformed user input (CSV layout, columns, cell values)."""


@dataclass
class DataSet:
    """Response block ``Y`` (n x r) paired with predictor block ``X`` (n x p)."""

    Y: np.ndarray
    X: np.ndarray
    response_names: list = field(default_factory=list)
    predictor_names: list = field(default_factory=list)

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim == 1:
            X = X[:, None]
        if Y.shape[0] != X.shape[0]:
            raise ValueError(f"row mismatch: Y has {Y.shape[0]} rows, X has {X.shape[0]}")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
            raise ValueError("data contain non-finite values")
        self.Y, self.X = Y, X
        if not self.response_names:
            self.response_names = [f"y{j + 1}" for j in range(Y.shape[1])]
        if not self.predictor_names:
            self.predictor_names = [f"x{j + 1}" for j in range(X.shape[1])]

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def r(self):
        return self.Y.shape[1]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, idx):
        return DataSet(self.Y[idx], self.X[idx], list(self.response_names), list(self.predictor_names))


def read_table(path):
    """Read a headered numeric CSV into ``(header, values)``."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file, header row required")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    body = [row for row in rows[1:] if row]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise InputError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: non-numeric value {cell!r} at row {i + 2}, column {header[j]!r}"
                ) from None
            if not np.isfinite(values[i, j]):
                raise InputError(f"{path}: non-finite value at row {i + 2}, column {header[j]!r}")
    return header, values


def read_dataset(path, responses, predictors=None) -> DataSet:
    header, values = read_table(path)
    missing = [c for c in responses if c not in header]
    if missing:
        raise InputError(f"{path}: response columns not found: {missing}")
    if predictors is None:
        predictors = [c for c in header if c not in responses]
    else:
        missing = [c for c in predictors if c not in header]
        if missing:
            raise InputError(f"{path}: predictor columns not found: {missing}")
    if not predictors:
        raise InputError(f"{path}: no predictor columns")
    yi = [header.index(c) for c in responses]
    xi = [header.index(c) for c in predictors]
    return DataSet(values[:, yi], values[:, xi], list(responses), list(predictors))


def read_predictors(path, predictors):
    header, values = read_table(path)
    missing = [c for c in predictors if c not in header]
    if missing:
        raise InputError(f"{path}: predictor columns not found: {missing}")
    return values[:, [header.index(c) for c in predictors]]


def format_float(v):
    # repr gives the shortest string that round-trips exactly
    return repr(float(v))


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
