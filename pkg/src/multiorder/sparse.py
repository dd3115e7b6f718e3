"""Canonical CSR matrices and the handful of kernels the pipeline needs.

Every constructor returns canonical form: sorted, de-duplicated column
indices per row and no stored zeros. Products and sums are delegated to
``scipy.sparse`` and re-canonicalized on the way out, so equality between
two ``SparseMatrix`` values is a plain array comparison.

Dense matrices are ordinary 2-D ``float64`` numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, DomainError, ShapeError

PRUNE_TOL = 1e-15
# products expected to fill more than this fraction go through dense BLAS
DENSE_FILL = 0.25


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro, ci, v = self.row_offsets, self.col_indices, self.values
        if ro.shape != (self.n_rows + 1,) or ro[0] != 0 or ro[-1] != len(ci) or len(ci) != len(v):
            raise ShapeError("inconsistent CSR offsets")
        if np.any(np.diff(ro) < 0):
            raise ShapeError("row_offsets must be non-decreasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ShapeError("column index out of range")
        if not np.all(np.isfinite(v)):
            raise DomainError("stored values must be finite")
        for arr in (ro, ci, v):
            arr.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def from_scipy(cls, m, prune: float = 0.0) -> "SparseMatrix":
        m = sp.csr_matrix(m, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        if prune > 0.0:
            m.data[np.abs(m.data) < prune] = 0.0
        m.eliminate_zeros()
        return cls(
            m.shape[0],
            m.shape[1],
            m.indptr.astype(np.int64),
            m.indices.astype(np.int64),
            m.data.astype(np.float64),
        )

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"expected a 2-D array, got shape {a.shape}")
        return cls.from_scipy(sp.csr_matrix(a))

    @classmethod
    def from_coo(cls, rows, cols, values, shape: tuple[int, int]) -> "SparseMatrix":
        """Build from triplets; duplicate coordinates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        return cls.from_scipy(sp.coo_matrix((values, (rows, cols)), shape=shape))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, np.int64), np.zeros(0, np.int64), np.zeros(0))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values.copy(), self.col_indices.copy(), self.row_offsets.copy()),
            shape=self.shape,
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.to_scipy().sum(axis=1)).ravel()

    def equals(self, other: "SparseMatrix") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    def is_symmetric(self) -> bool:
        return self.n_rows == self.n_cols and self.equals(transpose(self))

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def _shape_mismatch(op: str, a_shape, b_shape) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {tuple(a_shape)} and {tuple(b_shape)}")


def spmm_sd(a: SparseMatrix, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or a.n_cols != b.shape[0]:
        raise _shape_mismatch("spmm_sd", a.shape, b.shape)
    return np.asarray(a.to_scipy() @ b)


def _expected_fill(a: SparseMatrix, b: SparseMatrix) -> float:
    """Fill fraction of ``a @ b`` under independent uniform sparsity patterns."""
    da = a.nnz / max(a.n_rows * a.n_cols, 1)
    db = b.nnz / max(b.n_rows * b.n_cols, 1)
    return 1.0 - (1.0 - da * db) ** a.n_cols


def spmm_ss(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    if a.n_cols != b.n_rows:
        raise _shape_mismatch("spmm_ss", a.shape, b.shape)
    if _expected_fill(a, b) > DENSE_FILL:
        return SparseMatrix.from_dense(a.to_dense() @ b.to_dense())
    return SparseMatrix.from_scipy(a.to_scipy() @ b.to_scipy())


def add_scaled(terms: Sequence[tuple[float, SparseMatrix]]) -> SparseMatrix:
    """Entrywise weighted sum of equally shaped matrices."""
    terms = list(terms)
    if not terms:
        raise ArgumentError("add_scaled needs at least one term")
    shape = terms[0][1].shape
    acc = None
    for w, m in terms:
        if m.shape != shape:
            raise ArgumentError(f"add_scaled: shape {m.shape} differs from {shape}")
        scaled = m.to_scipy() * float(w)
        acc = scaled if acc is None else acc + scaled
    return SparseMatrix.from_scipy(acc, prune=PRUNE_TOL)


def transpose(m: SparseMatrix) -> SparseMatrix:
    return SparseMatrix.from_scipy(m.to_scipy().T)


def _require_square(op: str, m: SparseMatrix):
    if m.n_rows != m.n_cols:
        raise ShapeError(f"{op}: expected a square matrix, got {m.shape}")


def symmetrize(m: SparseMatrix) -> SparseMatrix:
    """Undirected closure ``m + m.T - diag(m)``."""
    _require_square("symmetrize", m)
    s = m.to_scipy()
    return SparseMatrix.from_scipy(s + s.T - sp.diags(s.diagonal()))


def sym_normalize(m: SparseMatrix) -> SparseMatrix:
    """Renormalized adjacency ``D^-1/2 (m + I) D^-1/2`` with D the degrees of ``m + I``."""
    _require_square("sym_normalize", m)
    if m.nnz and m.values.min() < 0:
        raise DomainError("sym_normalize: adjacency has a negative entry")
    c = m.to_scipy() + sp.identity(m.n_rows, format="csr")
    d = np.asarray(c.sum(axis=1)).ravel()
    c = c.tocoo()
    vals = c.data / np.sqrt(d[c.row] * d[c.col])
    return SparseMatrix.from_scipy(sp.coo_matrix((vals, (c.row, c.col)), shape=m.shape))


def softmax_rows(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DomainError("softmax_rows: non-finite logit")
    squeeze = z.ndim == 1
    z = np.atleast_2d(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if squeeze else out

