"""Tabular input: response, covariate columns and observation weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, DegeneracyError

_MISSING = {"", "na", "nan", "null", "none"}


@dataclass
class Dataset:
    """Observed responses with named covariate columns.

    Numeric covariates are float arrays; categorical ones are object arrays of
    level strings.  ``weights`` defaults to ``1/N`` for every observation.
    """

    y: np.ndarray
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        N = self.y.size
        if N == 0:
            raise DataError("empty dataset")
        if not np.all(np.isfinite(self.y)):
            raise DataError("response contains non-finite values")
        cov = {}
        for name, col in self.covariates.items():
            col = np.asarray(col)
            if col.dtype.kind in "fiub":
                col = col.astype(float).ravel()
                if not np.all(np.isfinite(col)):
                    raise DataError(f"column '{name}' contains non-finite values")
            else:
                col = np.asarray([str(v) for v in col.ravel()], dtype=object)
            if col.size != N:
                raise DataError(f"column '{name}' has {col.size} rows, response has {N}")
            cov[name] = col
        self.covariates = cov
        if self.weights is None:
            self.weights = np.full(N, 1.0 / N)
        else:
            self.weights = np.asarray(self.weights, dtype=float).ravel()
            if self.weights.size != N:
                raise DataError("weight vector length does not match the data")
            if np.any(~np.isfinite(self.weights)) or np.any(self.weights < 0):
                raise DataError("weights must be finite and non-negative")

    @property
    def N(self) -> int:
        return self.y.size

    def column(self, name: str) -> np.ndarray:
        try:
            return self.covariates[name]
        except KeyError:
            raise DataError(f"no column named '{name}'") from None

    def with_weights(self, weights) -> "Dataset":
        return Dataset(self.y, self.covariates, weights)

    def with_response(self, y) -> "Dataset":
        return Dataset(y, self.covariates, self.weights)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.y[rows],
            {k: v[rows] for k, v in self.covariates.items()},
            self.weights[rows],
        )


def read_table(path, categorical: Iterable[str] = ()) -> dict[str, np.ndarray]:
    """Read a headered UTF-8 CSV into named columns.

    Columns listed in ``categorical`` stay as strings; all others must parse
    as floats.  Rows with missing entries are rejected, naming the (1-based,
    header excluded) row numbers.
    """
    categorical = set(categorical)
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        rows = []
        missing = []
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            cells = [c.strip() for c in row]
            if any(c.lower() in _MISSING for c in cells):
                missing.append(lineno)
            rows.append(cells)
    if missing:
        shown = ", ".join(str(r) for r in missing[:20])
        raise DataError(f"{path}: missing values in rows {shown}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    out = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in rows]
        if name in categorical:
            out[name] = np.asarray(raw, dtype=object)
            continue
        try:
            out[name] = np.asarray([float(v) for v in raw])
        except ValueError:
            bad = next(k for k, v in enumerate(raw, start=1) if not _is_float(v))
            raise DataError(
                f"{path}: column '{name}' row {bad}: {raw[bad - 1]!r} is not numeric "
                "(declare it categorical in the config)"
            ) from None
    return out


def _is_float(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def dataset_from_table(
    table: Mapping[str, np.ndarray],
    response: str,
    covariates: Iterable[str],
    weights: str | None = None,
) -> Dataset:
    for name in [response, *covariates, *([weights] if weights else [])]:
        if name not in table:
            raise DataError(f"no column named '{name}'")
    y = table[response]
    if np.unique(y).size < 2:
        raise DegeneracyError("response needs at least 2 distinct values")
    return Dataset(
        y,
        {c: table[c] for c in covariates},
        table[weights] if weights else None,
    )


def write_table(path, columns: Mapping[str, Iterable]) -> None:
    """Write equally long columns as a headered CSV, floats in ``repr`` form."""
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v
