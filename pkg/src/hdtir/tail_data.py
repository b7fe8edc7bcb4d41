"""Datasets, tail thresholds, exceedance extraction and log-log diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Response vector ``y`` with an n x p design ``x`` (dense or sparse)."""

    y: np.ndarray
    x: np.ndarray | sp.csr_matrix
    feature_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = self.x
        if sp.issparse(x):
            x = sp.csr_matrix(x, dtype=float)
        else:
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x.reshape(-1, 1)
            if x.ndim != 2:
                raise DataError("design must be two-dimensional")
        if x.shape[0] != y.shape[0]:
            raise DataError(
                f"design has {x.shape[0]} rows but response has {y.shape[0]} entries")
        if np.any(~np.isfinite(y)):
            raise DataError("response contains non-finite values")
        names = self.feature_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != x.shape[1]:
                raise DataError(
                    f"{len(names)} feature names for {x.shape[1]} columns")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.x)

    def dense_rows(self, idx) -> np.ndarray:
        """Dense copy of the selected design rows."""
        rows = self.x[idx]
        return rows.toarray() if sp.issparse(rows) else np.array(rows, dtype=float)

    def to_dense(self) -> "Dataset":
        if not self.is_sparse:
            return self
        return Dataset(self.y, self.x.toarray(), self.feature_names)

    def to_sparse(self) -> "Dataset":
        if self.is_sparse:
            return self
        return Dataset(self.y, sp.csr_matrix(self.x), self.feature_names)

    def feature_name(self, j: int) -> str:
        if self.feature_names is None:
            return f"x{j + 1}"
        return self.feature_names[j]


@dataclass(frozen=True)
class TailSample:
    """Exceedances above ``omega`` with precomputed log-exceedances.

    ``rows`` is the dense n0 x p block of covariates for the exceedances and
    ``log_exceedances`` holds m_i = log(Y_i / omega) > 0.
    """

    omega: float
    rows: np.ndarray
    log_exceedances: np.ndarray
    source_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1)
        m = np.asarray(self.log_exceedances, dtype=float).ravel()
        if not self.omega > 0:
            raise DataError("threshold omega must be positive")
        if rows.shape[0] != m.shape[0]:
            raise DataError("rows and log_exceedances disagree in length")
        if m.size == 0:
            raise DataError("tail sample is empty")
        if np.any(m <= 0) or np.any(~np.isfinite(m)):
            raise DataError("log-exceedances must be finite and strictly positive")
        idx = self.source_indices
        idx = np.arange(m.size) if idx is None else np.asarray(idx, dtype=int).ravel()
        if idx.shape[0] != m.shape[0]:
            raise DataError("source_indices length mismatch")
        rows.setflags(write=False)
        m.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "log_exceedances", m)
        object.__setattr__(self, "source_indices", idx)

    @property
    def n0(self) -> int:
        return self.log_exceedances.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def subset(self, idx) -> "TailSample":
        """Tail sample restricted to positions ``idx`` (positions, not source ids)."""
        idx = np.asarray(idx, dtype=int)
        return TailSample(self.omega, self.rows[idx], self.log_exceedances[idx],
                          self.source_indices[idx])


def select_threshold(y, level: float) -> float:
    """Type-1 empirical quantile: the ceil(level * n)-th smallest value of ``y``."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise DataError("cannot select a threshold from an empty sample")
    if not 0.0 < level < 1.0:
        raise DataError(f"level must lie in (0, 1), got {level}")
    # round() absorbs products like 0.95 * 10000 landing a hair above an integer
    k = math.ceil(round(level * y.size, 9))
    k = min(max(k, 1), y.size)
    return float(np.partition(y, k - 1)[k - 1])


def extract_tail(data: Dataset, omega: float) -> TailSample:
    """Keep rows with Y_i > omega (strict) in their original order."""
    if not omega > 0:
        raise DataError("threshold omega must be positive")
    keep = np.flatnonzero(data.y > omega)
    if keep.size == 0:
        raise DataError(f"no exceedances above omega={omega!r}; threshold too high")
    m = np.log(data.y[keep] / omega)
    return TailSample(omega, data.dense_rows(keep), m, keep)


def tail_at_level(data: Dataset, level: float) -> TailSample:
    return extract_tail(data, select_threshold(data.y, level))


@dataclass(frozen=True)
class LogLogPoints:
    rank: np.ndarray
    log_y: np.ndarray
    n_dropped: int

    def __len__(self):
        return self.rank.shape[0]

    def as_pairs(self) -> list[tuple[int, float]]:
        return [(int(r), float(v)) for r, v in zip(self.rank, self.log_y)]


def loglog_points(y) -> LogLogPoints:
    """Rank (1 = largest) against log y for the positive entries of ``y``."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise DataError("empty response vector")
    pos = y[y > 0]
    if pos.size == 0:
        raise DataError("no positive responses to plot")
    log_y = np.log(np.sort(pos)[::-1])
    rank = np.arange(1, pos.size + 1)
    return LogLogPoints(rank, log_y, int(y.size - pos.size))


def loglog_slope(points: LogLogPoints, top_fraction: float = 0.1) -> float:
    """Least-squares slope of log y on log rank over the largest ``top_fraction``."""
    if not 0.0 < top_fraction <= 1.0:
        raise DataError("top_fraction must lie in (0, 1]")
    k = max(2, int(math.ceil(top_fraction * len(points))))
    if len(points) < 2:
        raise DataError("need at least two points for a slope")
    k = min(k, len(points))
    lr = np.log(points.rank[:k].astype(float))
    slope, _ = np.polyfit(lr, points.log_y[:k], 1)
    return float(slope)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def read_csv_dataset(path, response: str = "y") -> Dataset:
    """Read a headered CSV; ``response`` names the response column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise DataError(f"{path}: response column {response!r} not in header")
        r = header.index(response)
        names = [h for i, h in enumerate(header) if i != r]
        ys, xs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if vals[r] < 0:
                raise DataError(f"{path}:{lineno}: negative response")
            ys.append(vals[r])
            xs.append([v for i, v in enumerate(vals) if i != r])
    if not ys:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(ys), np.array(xs, dtype=float).reshape(len(ys), len(names)),
                   names)


def write_csv_dataset(data: Dataset, path, response: str = "y") -> None:
    names = [data.feature_name(j) for j in range(data.p)]
    x = data.x.toarray() if data.is_sparse else data.x
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response, *names])
        for yi, row in zip(data.y, x):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in row)])


def read_triplets(path, n: int, p: int) -> sp.csr_matrix:
    """Read a ``row,col,value`` triplet CSV (0-based indices) into CSR."""
    rows, cols, vals = [], [], []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["row", "col", "value"]:
            raise DataError(f"{path}: expected header row,col,value")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                i, j, v = int(rec[0]), int(rec[1]), float(rec[2])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed triplet") from None
            if not (0 <= i < n and 0 <= j < p):
                raise DataError(f"{path}:{lineno}: index ({i},{j}) outside {n}x{p}")
            rows.append(i)
            cols.append(j)
            vals.append(v)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, p)).tocsr()
    mat.sum_duplicates()
    return mat


def write_triplets(x, path) -> None:
    coo = sp.coo_matrix(x)
    order = np.lexsort((coo.col, coo.row))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for k in order:
            v = float(coo.data[k])
            w.writerow([int(coo.row[k]), int(coo.col[k]), "1" if v == 1.0 else repr(v)])


def read_response(path, column: str = "y") -> np.ndarray:
    """Read one numeric column from a headered CSV."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise DataError(f"{path}: column {column!r} not found")
        out = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                out.append(float(rec[column]))
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: bad value {rec[column]!r}") from None
    if not out:
        raise DataError(f"{path}: no data rows")
    return np.array(out)


def read_vocabulary(path) -> list[str]:
    with Path(path).open(encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.rstrip("\n")]


def read_sparse_dataset(triplets, response, vocabulary=None, p: int | None = None,
                        response_column: str = "likes") -> Dataset:
    y = read_response(response, response_column)
    names = read_vocabulary(vocabulary) if vocabulary is not None else None
    if p is None:
        if names is None:
            raise DataError("need either a vocabulary file or an explicit p")
        p = len(names)
    return Dataset(y, read_triplets(triplets, y.size, p), names)


def write_loglog_csv(points: LogLogPoints, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "log_y"])
        for r, v in zip(points.rank, points.log_y):
            w.writerow([int(r), repr(float(v))])

