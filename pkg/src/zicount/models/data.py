"""Dataset container and CSV ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from ..errors import InputError

INTERCEPT = "(Intercept)"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Count outcomes with a design matrix ``[1, treatment, covariates...]``.

    An intercept-only design (a single column of ones) is also accepted.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = np.asarray(self.y)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("y must be a vector with one entry per design row")
        n, p = X.shape
        if n < p:
            raise ValueError(f"need at least as many rows as columns (n={n}, p={p})")
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix has non-finite entries")
        if np.any(X[:, 0] != 1.0):
            raise ValueError("first design column must be the intercept (all ones)")
        if p >= 2 and not np.all(np.isin(X[:, 1], (0.0, 1.0))):
            raise ValueError("second design column must be a 0/1 treatment indicator")
        yf = np.asarray(y, dtype=float)
        if np.any(yf < 0) or np.any(yf != np.round(yf)):
            raise ValueError("outcomes must be nonnegative integers")
        names = tuple(self.column_names) or _default_names(p)
        if len(names) != p:
            raise ValueError("column_names must name every design column")
        object.__setattr__(self, "y", yf.astype(np.int64))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_names", names)
        self.y.setflags(write=False)
        self.X.setflags(write=False)

    @classmethod
    def from_columns(cls, y, treatment=None, covariates=None, names=None):
        """Build a dataset from an outcome vector and optional predictors."""
        y = np.asarray(y)
        cols = [np.ones(len(y))]
        labels = [INTERCEPT]
        if treatment is not None:
            cols.append(np.asarray(treatment, dtype=float))
            labels.append("treatment")
        covariates = [] if covariates is None else list(covariates)
        for j, c in enumerate(covariates):
            cols.append(np.asarray(c, dtype=float))
            labels.append(f"x{j + 2}")
        if names is not None:
            labels = [INTERCEPT, *names]
        return cls(y, np.column_stack(cols), tuple(labels))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def treatment_name(self) -> str:
        if self.p < 2:
            raise ValueError("dataset has no treatment column")
        return self.column_names[1]

    @cached_property
    def yf(self) -> np.ndarray:
        return self.y.astype(float)

    @cached_property
    def is_zero(self) -> np.ndarray:
        return self.y == 0

    @cached_property
    def log_factorial(self) -> np.ndarray:
        return special.gammaln(self.yf + 1.0)

    @cached_property
    def log_factorial_sum(self) -> float:
        return float(self.log_factorial.sum())

    def subset(self, rows) -> "Dataset":
        return Dataset(self.y[rows], self.X[rows], self.column_names)


def _default_names(p):
    names = [INTERCEPT]
    if p >= 2:
        names.append("treatment")
    names.extend(f"x{j}" for j in range(2, p))
    return tuple(names)


def read_csv(
    path,
    outcome: str,
    treatment: str | None = None,
    covariates: Sequence[str] = (),
) -> Dataset:
    """Load a dataset from a comma-separated file with a header row.

    Raises
    ------
    InputError
        With row/column context for missing columns, non-numeric cells,
        non-integer or negative outcomes and non-binary treatment values.
    """
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        wanted = [outcome] + ([treatment] if treatment else []) + list(covariates)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise InputError(f"{path}: unknown column(s) {', '.join(missing)}; header has {', '.join(header)}")
        idx = [header.index(c) for c in wanted]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for name, j in zip(wanted, idx):
                cell = row[j].strip() if j < len(row) else ""
                try:
                    values.append(float(cell))
                except ValueError:
                    raise InputError(f"{path}: line {lineno}, column '{name}': not a number: {cell!r}") from None
                if not np.isfinite(values[-1]):
                    raise InputError(f"{path}: line {lineno}, column '{name}': non-finite value")
            y_val = values[0]
            if y_val < 0 or y_val != int(y_val):
                raise InputError(f"{path}: line {lineno}, column '{outcome}': outcome must be a nonnegative integer, got {row[idx[0]].strip()!r}")
            if treatment and values[1] not in (0.0, 1.0):
                raise InputError(f"{path}: line {lineno}, column '{treatment}': treatment must be 0 or 1")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    X = np.column_stack([np.ones(len(arr)), arr[:, 1:]])
    try:
        return Dataset(arr[:, 0], X, (INTERCEPT, *wanted[1:]))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
