"""
Data manager: loads CSV files into Datasets, writes them back, and
centers/scales predictor matrices.
"""
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from errors import IngestionError

logger = logging.getLogger(__name__)

MIN_ROWS = 3

_NUMBER_RE = re.compile(r'^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$|^[+-]?(inf|infinity|nan)$', re.IGNORECASE)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Dataset:
    """Outcome vector y and row-aligned predictor matrix x (n x p)."""

    y: np.ndarray
    x: np.ndarray
    feature_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if y.ndim != 1:
            raise IngestionError(f"outcome must be a vector, got shape {y.shape}")
        if x.ndim == 1 and len(y) == len(x) and x.size == 0:
            x = x.reshape(len(y), 0)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise IngestionError(
                f"predictor rows ({x.shape[0] if x.ndim else 0}) do not match outcome length ({len(y)})"
            )
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise IngestionError("dataset contains non-finite values")
        if self.feature_names is not None and len(self.feature_names) != x.shape[1]:
            raise IngestionError(
                f"{len(self.feature_names)} feature names for {x.shape[1]} predictor columns"
            )
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Rows selected (or repeated) by integer index."""
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.y[rows], self.x[rows], self.feature_names)

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        """Same x, new outcome vector."""
        return Dataset(y, self.x, self.feature_names)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------
def _is_number(cell: str) -> bool:
    return bool(_NUMBER_RE.match(cell.strip()))


def _resolve_outcome_column(
    outcome_column: Union[str, int],
    header: Optional[list[str]],
    n_cols: int,
) -> int:
    if isinstance(outcome_column, (int, np.integer)) and not isinstance(outcome_column, bool):
        idx = int(outcome_column)
    elif header is not None and outcome_column in header:
        return header.index(outcome_column)
    elif str(outcome_column).lstrip("-").isdigit():
        idx = int(outcome_column)
    else:
        raise IngestionError(f"outcome column '{outcome_column}' not found")
    if not -n_cols <= idx < n_cols:
        raise IngestionError(f"outcome column index {idx} out of range for {n_cols} columns")
    return idx % n_cols


def _read_numeric_table(file_path: str, delimiter: str) -> tuple[np.ndarray, list[str], Optional[list[str]]]:
    """Parse the whole file into a float matrix plus column labels."""
    if not os.path.isfile(file_path):
        raise IngestionError(f"file not found -> {file_path}")

    try:
        raw = pd.read_csv(
            file_path,
            sep=delimiter,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise IngestionError(f"cannot parse {file_path}: {e}") from e

    if raw.empty:
        raise IngestionError("dataset too small: file is empty")

    first_row = [str(v) for v in raw.iloc[0].tolist()]
    numeric = [_is_number(v) for v in first_row]
    has_header = not any(numeric)
    if not has_header and not all(numeric):
        j = numeric.index(False)
        raise IngestionError(f"missing or non-numeric value '{first_row[j].strip()}'", row=1, column=str(j))
    header = [v.strip() for v in first_row] if has_header else None
    body = raw.iloc[1:] if has_header else raw
    # 1-based line numbers as they appear in the file
    line_offset = 2 if has_header else 1

    n_cols = body.shape[1]
    labels = header if header is not None else [str(i) for i in range(n_cols)]

    values = np.empty(body.shape, dtype=float)
    for j in range(n_cols):
        column = body.iloc[:, j].str.strip()
        parsed = pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(parsed)
        if bad.any():
            i = int(np.argmax(bad))
            raise IngestionError(
                f"missing or non-numeric value '{column.iloc[i]}'",
                row=i + line_offset,
                column=labels[j],
            )
        values[:, j] = parsed

    if values.shape[0] < MIN_ROWS:
        raise IngestionError(f"dataset too small: {values.shape[0]} rows, need at least {MIN_ROWS}")
    return values, labels, header


def load_csv(
    file_path: str,
    outcome_column: Union[str, int] = 0,
    delimiter: str = ",",
) -> Dataset:
    """
    Load a numeric CSV file into a Dataset.

    The outcome is the named (or 0-based indexed) column; every other column
    becomes a predictor, in file order. A first row with no numeric cell is
    taken as the header; a partly numeric first row is data. Missing or
    non-numeric cells are errors.
    """
    return load_outcomes(file_path, [outcome_column], delimiter)[0]


def load_outcomes(
    file_path: str,
    outcome_columns: Sequence[Union[str, int]],
    delimiter: str = ",",
) -> list[Dataset]:
    """
    One Dataset per outcome column, all sharing the same predictor matrix:
    every column not named as an outcome, in file order.
    """
    if len(outcome_columns) < 1:
        raise IngestionError("no outcome column given")
    values, labels, header = _read_numeric_table(file_path, delimiter)
    n_cols = values.shape[1]
    out_idx = [_resolve_outcome_column(c, header, n_cols) for c in outcome_columns]
    pred_idx = [j for j in range(n_cols) if j not in out_idx]
    feature_names = tuple(labels[j] for j in pred_idx)
    x = values[:, pred_idx]

    datasets = [Dataset(values[:, j], x, feature_names) for j in out_idx]
    logger.info(
        "Loaded %s: n=%d, p=%d, outcome(s)=%s",
        file_path, values.shape[0], len(pred_idx), ", ".join(labels[j] for j in out_idx),
    )
    return datasets


def write_csv(dataset: Dataset, file_path: str, outcome_name: str = "y") -> str:
    """Write y first, then predictors, with 17 significant digits."""
    names = list(dataset.feature_names or (f"x{j + 1}" for j in range(dataset.p)))
    df = pd.DataFrame(dataset.x, columns=names)
    df.insert(0, outcome_name, dataset.y)
    df.to_csv(file_path, index=False, float_format="%.17g")
    return file_path


# ---------------------------------------------------------------------------
# Centering / scaling
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Transform:
    """Column means and scales learned on training rows."""

    means: np.ndarray
    scales: np.ndarray
    zero_variance: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def p(self) -> int:
        return self.means.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.means) / self.scales

    @classmethod
    def identity(cls, p: int) -> "Transform":
        return cls(np.zeros(p), np.ones(p), np.zeros(p, dtype=bool))


def fit_transform(x: np.ndarray, scale_predictors: bool) -> Transform:
    """Learn the centering (and optional unit-sd scaling) of x's columns."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    means = x.mean(axis=0) if n else np.zeros(p)
    zero_variance = np.ptp(x, axis=0) == 0 if n else np.ones(p, dtype=bool)
    scales = np.ones(p)
    if scale_predictors and n >= 2:
        sd = x.std(axis=0, ddof=1)
        scales = np.where(zero_variance, 1.0, sd)
    return Transform(_frozen(means), _frozen(scales), np.asarray(zero_variance, dtype=bool))


def center_scale(dataset: Dataset, scale_predictors: bool = True) -> tuple[Dataset, Transform]:
    """
    Center each predictor column (and scale it to unit sample sd when asked).
    Zero-variance columns are centered, never scaled, and flagged in the
    returned Transform. The outcome is untouched.
    """
    transform = fit_transform(dataset.x, scale_predictors)
    if transform.zero_variance.any():
        logger.debug("%d zero-variance predictor column(s) left unscaled", int(transform.zero_variance.sum()))
    return Dataset(dataset.y, transform.apply(dataset.x), dataset.feature_names), transform
