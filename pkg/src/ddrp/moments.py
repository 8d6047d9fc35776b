"""Second-moment estimation: full E[x x^T] matrices and their diagonals.

Nothing here centers the data. Every statistic is the raw (uncentered)
second moment, because that is what the projection variance depends on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, EmptyDataError

_BLOCK = 4096


@dataclass(frozen=True)
class SecondMoment:
    dim: int
    diag: np.ndarray
    full: Optional[np.ndarray] = None
    n_samples: int = 0

    @property
    def has_full(self):
        return self.full is not None

    def merge(self, other):
        """Sample-count weighted combination of two shards' moments."""
        if other.dim != self.dim:
            raise DimensionError(f"cannot merge moments of dim {self.dim} and {other.dim}")
        n = self.n_samples + other.n_samples
        if n == 0:
            raise EmptyDataError("cannot merge two empty moment estimates")
        a, b = self.n_samples / n, other.n_samples / n
        diag = a * self.diag + b * other.diag
        full = None
        if self.full is not None and other.full is not None:
            full = a * self.full + b * other.full
        return SecondMoment(self.dim, diag, full, n)


def from_matrices(full=None, diag=None):
    """Wrap known population moments (no sample count)."""
    if full is not None:
        full = np.asarray(full, dtype=np.float64)
        if full.ndim != 2 or full.shape[0] != full.shape[1]:
            raise DimensionError(f"second-moment matrix must be square, got {full.shape}")
        d = np.diag(full).copy() if diag is None else np.asarray(diag, dtype=np.float64)
        return SecondMoment(full.shape[0], d, full)
    if diag is None:
        raise ValueError("need a full matrix or a diagonal")
    diag = np.asarray(diag, dtype=np.float64)
    if np.any(diag < 0):
        raise ValueError("second-moment diagonal must be non-negative")
    return SecondMoment(diag.shape[0], diag)


def _row_square_sums(data):
    if sp.issparse(data):
        return np.asarray(data.multiply(data).sum(axis=0)).ravel()
    return np.einsum("ij,ij->j", data, data)


def estimate_full(data):
    """``(1/n) X^T X`` over the rows of a dense or CSR matrix."""
    n = data.shape[0]
    if n < 1:
        raise EmptyDataError("cannot estimate second moments from zero rows")
    if sp.issparse(data):
        gram = (data.T @ data).toarray()
    else:
        data = np.asarray(data, dtype=np.float64)
        gram = data.T @ data
    full = 0.5 * (gram + gram.T) / n
    diag = _row_square_sums(data) / n
    return SecondMoment(data.shape[1], diag, full, n)


def estimate_diag(data):
    """Diagonal-only estimate for an in-memory matrix."""
    n = data.shape[0]
    if n < 1:
        raise EmptyDataError("cannot estimate second moments from zero rows")
    return SecondMoment(data.shape[1], _row_square_sums(data) / n, None, n)


class DiagAccumulator:
    """Single-pass, O(d) accumulator of per-coordinate mean squares.

    Rows are buffered into blocks; block sums are pairwise (numpy) and the
    running total is Kahan-compensated across blocks.
    """

    def __init__(self, dim=None):
        self.dim = dim
        self.count = 0
        self._sum = None
        self._comp = None
        self._buffer = []

    def _init(self, dim):
        self.dim = dim
        self._sum = np.zeros(dim)
        self._comp = np.zeros(dim)

    def _add(self, block_sum):
        y = block_sum - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t

    def _flush(self):
        if self._buffer:
            block = np.vstack(self._buffer)
            self._buffer = []
            self._add(np.einsum("ij,ij->j", block, block))

    def update(self, rows):
        """Add one row (1-D) or a block of rows (2-D, dense or CSR)."""
        if sp.issparse(rows):
            width = rows.shape[1]
            sq = _row_square_sums(rows)
            n_rows = rows.shape[0]
        else:
            rows = np.asarray(rows, dtype=np.float64)
            if rows.ndim == 1:
                rows = rows[None, :]
            width, n_rows = rows.shape[1], rows.shape[0]
            sq = None
        if self._sum is None:
            self._init(width)
        elif width != self.dim:
            raise DimensionError(
                f"row {self.count} has length {width}, expected {self.dim}")
        if sq is not None:
            self._flush()
            self._add(sq)
        elif n_rows >= _BLOCK:
            self._flush()
            self._add(np.einsum("ij,ij->j", rows, rows))
        else:
            self._buffer.append(rows)
            if sum(b.shape[0] for b in self._buffer) >= _BLOCK:
                self._flush()
        self.count += n_rows
        return self

    def merge(self, other):
        self._flush()
        other._flush()
        if other._sum is None:
            return self
        if self._sum is None:
            self._init(other.dim)
        elif other.dim != self.dim:
            raise DimensionError(f"cannot merge accumulators of dim {self.dim} and {other.dim}")
        self._add(other._sum - other._comp)
        self.count += other.count
        return self

    def result(self):
        self._flush()
        if self.count == 0:
            raise EmptyDataError("no rows were accumulated")
        return SecondMoment(self.dim, (self._sum - self._comp) / self.count, None, self.count)


def estimate_diag_streaming(row_stream: Iterable):
    """Mean of squared coordinates over an iterable of rows or row blocks."""
    acc = DiagAccumulator()
    for rows in row_stream:
        acc.update(rows)
    return acc.result()


class GramAccumulator:
    """Sharded accumulation of ``X^T X``; merge partial sums then finalize."""

    def __init__(self, dim):
        self.dim = dim
        self.count = 0
        self.gram = np.zeros((dim, dim))
        self.sq = np.zeros(dim)

    def update(self, rows):
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.shape[1] != self.dim:
            raise DimensionError(f"rows have {rows.shape[1]} columns, expected {self.dim}")
        if sp.issparse(rows):
            self.gram += (rows.T @ rows).toarray()
        else:
            rows = np.asarray(rows, dtype=np.float64)
            self.gram += rows.T @ rows
        self.sq += _row_square_sums(rows)
        self.count += rows.shape[0]
        return self

    def merge(self, other):
        if other.dim != self.dim:
            raise DimensionError(f"cannot merge accumulators of dim {self.dim} and {other.dim}")
        self.gram += other.gram
        self.sq += other.sq
        self.count += other.count
        return self

    def result(self):
        if self.count == 0:
            raise EmptyDataError("no rows were accumulated")
        full = 0.5 * (self.gram + self.gram.T) / self.count
        return SecondMoment(self.dim, self.sq / self.count, full, self.count)
