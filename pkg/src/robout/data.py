"""Dataset container, robust standardization, sparsity accounting and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    MissingColumnError,
    NonFiniteError,
    NonNumericError,
    RaggedRowError,
    TooFewRowsError,
)

#: Phi^{-1}(0.75); MAD / this constant is a consistent normal scale.
PHI_INV_075 = 0.6744897501960817


def _frozen(a, ndim):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` (length n) and candidate predictors ``X`` (n x p).

    Arrays are copied and made read-only on construction.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: Optional[tuple] = None

    def __post_init__(self):
        y = _frozen(self.y, 1)
        X = _frozen(self.X, 2)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"y has {y.shape[0]} entries but X has {X.shape[0]} rows")
        if y.shape[0] < 2:
            raise ValueError("need at least 2 observations")
        if X.shape[1] < 1:
            raise ValueError("need at least 1 candidate predictor")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("Dataset entries must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != X.shape[1]:
                raise ValueError("column_names length must equal p")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def names(self) -> tuple:
        if self.column_names is not None:
            return self.column_names
        return tuple(f"x{j}" for j in range(self.p))


@dataclass(frozen=True)
class StandardizationStats:
    center: np.ndarray
    scale: np.ndarray
    degenerate_columns: tuple
    y_center: float = 0.0
    y_scale: float = 1.0

    @property
    def eligible(self) -> np.ndarray:
        """Boolean mask of columns that may enter penalized selection."""
        mask = np.ones(self.scale.shape[0], dtype=bool)
        mask[list(self.degenerate_columns)] = False
        return mask


@dataclass(frozen=True)
class SparsityProfile:
    zero_fraction: float
    zero_rows: int
    per_column_zero_fraction: np.ndarray = field(repr=False)


def mad_scale(a, axis=None):
    """Median and MAD rescaled by 1/Phi^{-1}(0.75)."""
    a = np.asarray(a, dtype=float)
    med = np.median(a, axis=axis, keepdims=True)
    mad = np.median(np.abs(a - med), axis=axis)
    return np.squeeze(med, axis=axis) if axis is not None else float(med.item()), mad / PHI_INV_075


def _negligible(scale, a, axis=None):
    # a MAD below the float resolution of the entries is numerically zero
    return scale <= np.finfo(float).eps * np.max(np.abs(a), axis=axis)


def robust_standardize(d: Dataset):
    """Center by the median and scale by the normalized MAD, column-wise.

    Columns whose MAD is zero (or below the float resolution of their
    entries) are reported as degenerate and left untouched.
    The response is treated the same way; a zero-MAD response is only
    centered.

    Returns
    -------
    (Dataset, StandardizationStats)
    """
    center, scale = mad_scale(d.X, axis=0)
    center = np.asarray(center, dtype=float)
    scale = np.asarray(scale, dtype=float)
    bad = _negligible(scale, d.X, axis=0)
    degenerate = np.flatnonzero(bad)

    Xs = np.array(d.X, dtype=float)
    ok = ~bad
    Xs[:, ok] = (Xs[:, ok] - center[ok]) / scale[ok]

    y_center, y_scale = mad_scale(d.y)
    if _negligible(y_scale, d.y):
        y_scale = 1.0
    ys = (d.y - y_center) / y_scale

    stats = StandardizationStats(
        center=center,
        scale=scale,
        degenerate_columns=tuple(int(j) for j in degenerate),
        y_center=float(y_center),
        y_scale=float(y_scale),
    )
    return Dataset(ys, Xs, d.column_names), stats


def destandardize(d: Dataset, stats: StandardizationStats) -> Dataset:
    """Invert :func:`robust_standardize`."""
    X = np.array(d.X, dtype=float)
    ok = stats.eligible
    X[:, ok] = X[:, ok] * stats.scale[ok] + stats.center[ok]
    y = d.y * stats.y_scale + stats.y_center
    return Dataset(y, X, d.column_names)


def sparsity_profile(d: Dataset) -> SparsityProfile:
    zeros = d.X == 0.0
    col = zeros.mean(axis=0)
    return SparsityProfile(
        zero_fraction=float(zeros.sum()) / zeros.size,
        zero_rows=int(np.all(zeros, axis=1).sum()),
        per_column_zero_fraction=col,
    )


# --------------------------------------------------------------------------
# CSV


def _parse_float(token: str):
    t = token.strip()
    if not t:
        raise ValueError("empty cell")
    return float(t)


def load_csv(
    path: Union[str, Path],
    response_column: Union[str, int],
    has_header: bool = True,
) -> Dataset:
    """Read a numeric CSV into a Dataset.

    ``response_column`` is a header name, or a 0-based index. Every other
    column becomes a candidate predictor, in file order. Errors carry the
    1-based data row (header excluded) in ``.row``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]  # blank trailing lines

    header = None
    if has_header:
        if not rows:
            raise TooFewRowsError(f"{path}: file is empty")
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]

    width = len(header) if header is not None else (len(rows[0]) if rows else 0)
    if isinstance(response_column, str) and not response_column.lstrip("-").isdigit():
        if header is None or response_column not in header:
            raise MissingColumnError(
                f"{path}: response column {response_column!r} not found", column=response_column
            )
        yidx = header.index(response_column)
    else:
        yidx = int(response_column)
        if not 0 <= yidx < width:
            raise MissingColumnError(
                f"{path}: response column index {yidx} out of range (width {width})",
                column=yidx,
            )

    labels = header if header is not None else [f"x{j}" for j in range(width)]
    values = np.empty((len(rows), width))
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise RaggedRowError(
                f"{path}: row {i} has {len(r)} fields, expected {width}", row=i
            )
        for j, tok in enumerate(r):
            try:
                v = _parse_float(tok)
            except ValueError:
                raise NonNumericError(
                    f"{path}: non-numeric cell {tok!r} at row {i}, column {labels[j]!r}",
                    row=i,
                    column=labels[j],
                ) from None
            if not math.isfinite(v):
                raise NonFiniteError(
                    f"{path}: non-finite value {tok!r} at row {i}, column {labels[j]!r}",
                    row=i,
                    column=labels[j],
                )
            values[i - 1, j] = v

    if values.shape[0] < 2:
        raise TooFewRowsError(f"{path}: need at least 2 data rows, found {values.shape[0]}")
    if width < 2:
        raise MissingColumnError(f"{path}: no predictor columns besides the response")

    keep = [j for j in range(width) if j != yidx]
    names = [labels[j] for j in keep]
    return Dataset(values[:, yidx], values[:, keep], names)


def format_float(v: float) -> str:
    """Shortest string that round-trips to the same double."""
    return repr(float(v))


def write_csv(d: Dataset, path: Union[str, Path], response_name: str = "y") -> None:
    """Write ``y`` followed by the columns of ``X`` with a header row."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response_name, *d.names()])
        for yi, row in zip(d.y, d.X):
            w.writerow([format_float(yi), *(format_float(v) for v in row)])

