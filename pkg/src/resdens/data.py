"""Datasets and trimming regions.

A Dataset holds the regression sample; simulated data may also carry the
true regression values and true errors, which the decomposition machinery
needs and real data cannot provide.  CSV layout: header ``x1..xd,y`` with
optional ``m_true`` and ``eps_true`` columns, UTF-8, '.' decimal point.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class TrimRegion:
    """Axis-aligned closed box; points inside it are kept."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("trim bounds must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ConfigError("trim region must have lower < upper on every axis")

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x) -> bool:
        pt = np.asarray(x, dtype=float).reshape(-1)
        if pt.size != self.dim:
            raise DimensionError(f"point has length {pt.size}, region dim is {self.dim}")
        return bool(np.all(pt >= self.lower) and np.all(pt <= self.upper))

    def contains_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionError(f"expected (n, {self.dim}) array, got {X.shape}")
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def require_inside(self, support_lo, support_hi) -> None:
        """Raise unless the box sits strictly inside the given support box."""
        lo = np.asarray(support_lo, dtype=float)
        hi = np.asarray(support_hi, dtype=float)
        if not (np.all(self.lower > lo) and np.all(self.upper < hi)):
            raise ConfigError(
                "trim region must lie strictly inside the covariate support box"
            )


def trim_region(lower, upper, dim: int | None = None) -> TrimRegion:
    """Build a TrimRegion, broadcasting scalar bounds to ``dim`` axes."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if dim is not None:
        if lo.size == 1:
            lo = np.full(dim, lo[0])
        if hi.size == 1:
            hi = np.full(dim, hi[0])
    return TrimRegion(lo, hi)


@dataclass(frozen=True)
class Dataset:
    """Regression sample (X, Y) with optional simulation truth."""

    X: np.ndarray
    Y: np.ndarray
    true_m: np.ndarray | None = None
    true_eps: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.Y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if X.ndim != 2:
            raise DimensionError("X must be an (n, d) array")
        n = X.shape[0]
        if n < 2:
            raise ConfigError("need at least two observations")
        if Y.shape != (n,):
            raise DimensionError("Y must be a length-n vector")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ConfigError("X and Y must be finite")
        for name in ("true_m", "true_eps"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                object.__setattr__(self, name, arr)
                if arr.shape != (n,):
                    raise DimensionError(f"{name} must be a length-n vector")
                if not np.all(np.isfinite(arr)):
                    raise ConfigError(f"{name} must be finite")
        if self.true_m is not None and self.true_eps is not None:
            if not np.array_equal(self.Y, self.true_m + self.true_eps):
                raise ConfigError("Y must equal true_m + true_eps exactly")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def simulated(self) -> bool:
        return self.true_m is not None and self.true_eps is not None


def _float_cell(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"row {row}: column {col!r} is not a number: {text!r}") from None
    if not np.isfinite(value):
        raise ConfigError(f"row {row}: column {col!r} is not finite: {text!r}")
    return value


def read_dataset_csv(path: str | Path) -> Dataset:
    """Read the dataset CSV schema; errors name the offending data row."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("empty dataset file") from None
        header = [h.strip() for h in header]
        x_cols = [h for h in header if h.startswith("x")]
        expected_x = [f"x{k + 1}" for k in range(len(x_cols))]
        want = expected_x + ["y"]
        optional = [c for c in ("m_true", "eps_true") if c in header]
        if header != want + optional:
            raise ConfigError(
                f"bad header {header!r}; expected x1..xd,y[,m_true][,eps_true]"
            )
        d = len(x_cols)
        rows_x, rows_y, rows_m, rows_e = [], [], [], []
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(
                    f"row {row_idx}: expected {len(header)} fields, got {len(row)}"
                )
            vals = [_float_cell(cell, row_idx, name) for cell, name in zip(row, header)]
            rows_x.append(vals[:d])
            rows_y.append(vals[d])
            if "m_true" in optional:
                rows_m.append(vals[d + 1])
            if "eps_true" in optional:
                rows_e.append(vals[len(header) - 1])
    if len(rows_y) < 2:
        raise ConfigError("need at least two data rows")
    return Dataset(
        X=np.asarray(rows_x, dtype=float),
        Y=np.asarray(rows_y, dtype=float),
        true_m=np.asarray(rows_m) if rows_m else None,
        true_eps=np.asarray(rows_e) if rows_e else None,
    )


def write_dataset_csv(path: str | Path, data: Dataset) -> None:
    """Write the dataset CSV schema with full float precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"x{k + 1}" for k in range(data.dim)] + ["y"]
    if data.true_m is not None:
        header.append("m_true")
    if data.true_eps is not None:
        header.append("eps_true")
    writer.writerow(header)
    for i in range(data.n):
        row = [f"{v:.17g}" for v in data.X[i]] + [f"{data.Y[i]:.17g}"]
        if data.true_m is not None:
            row.append(f"{data.true_m[i]:.17g}")
        if data.true_eps is not None:
            row.append(f"{data.true_eps[i]:.17g}")
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
