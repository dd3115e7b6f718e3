"""Attribute-homophily graph and the reconstruction loss that uses it."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError
from .sparse import SparseMatrix

LOG_EPS = 1e-12
METRICS = ("cosine", "gaussian")


class NoSupervisionWarning(UserWarning):
    """The semantic adjacency has no edges, so the reconstruction term is zero."""


@dataclass(frozen=True)
class SemanticAdjacency:
    matrix: SparseMatrix
    k: int
    metric: str

    @property
    def kappa(self) -> int:
        return self.matrix.nnz


def pairwise_similarity(x, metric: str = "cosine", bandwidth: float | None = None) -> np.ndarray:
    """Dense similarity matrix with ``-inf`` on the diagonal.

    Cosine similarity of a zero row with anything is 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ArgumentError(f"features must be a non-empty 2-D array, got shape {x.shape}")
    if metric == "cosine":
        norms = np.linalg.norm(x, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        xn = x / safe[:, None]
        sim = xn @ xn.T
        sim[norms == 0, :] = 0.0
        sim[:, norms == 0] = 0.0
    elif metric == "gaussian":
        if bandwidth is None or not bandwidth > 0:
            raise ArgumentError("gaussian similarity needs a positive bandwidth")
        sq = np.sum(x * x, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
        sim = np.exp(-d2 / (2.0 * bandwidth**2))
    else:
        raise ArgumentError(f"unknown similarity metric {metric!r}; choose from {METRICS}")
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, -np.inf)
    return sim


def top_k_neighbors(sim: np.ndarray, k: int) -> np.ndarray:
    """Indices of each row's ``k`` largest entries; ties go to the lower index."""
    order = np.argsort(-sim, axis=1, kind="stable")
    return order[:, :k]


def build_semantic_adjacency(x, k: int, metric: str = "cosine", bandwidth: float | None = None) -> SemanticAdjacency:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not (1 <= k < n):
        raise ArgumentError(f"need 1 <= k < n, got k={k}, n={n}")
    sim = pairwise_similarity(x, metric, bandwidth)
    nbrs = top_k_neighbors(sim, k)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    adj = np.zeros((n, n), dtype=bool)
    adj[rows, cols] = True
    adj |= adj.T
    np.fill_diagonal(adj, False)
    return SemanticAdjacency(SparseMatrix.from_dense(adj.astype(np.float64)), k, metric)


def _support_values(multi_order: SparseMatrix, sem: SemanticAdjacency):
    if multi_order.shape != sem.matrix.shape:
        raise ShapeError(f"rec_loss: shapes {multi_order.shape} and {sem.matrix.shape} differ")
    s = sem.matrix.to_scipy().tocoo()
    vals = np.asarray(multi_order.to_scipy()[s.row, s.col]).ravel()
    return s.row, s.col, vals


def rec_loss(multi_order: SparseMatrix, sem: SemanticAdjacency) -> float:
    """Mean negative log of the multi-order adjacency over semantic edges."""
    if sem.kappa == 0:
        warnings.warn("semantic adjacency is empty; reconstruction loss is 0", NoSupervisionWarning)
        return 0.0
    _, _, vals = _support_values(multi_order, sem)
    return float(-np.sum(np.log(np.maximum(vals, LOG_EPS))) / sem.kappa)


def rec_loss_grad(multi_order: SparseMatrix, sem: SemanticAdjacency) -> np.ndarray:
    """Dense gradient of :func:`rec_loss` with respect to the multi-order adjacency.

    Entries clamped at ``LOG_EPS`` get zero gradient.
    """
    n = multi_order.n_rows
    g = np.zeros((n, n))
    if sem.kappa == 0:
        return g
    rows, cols, vals = _support_values(multi_order, sem)
    live = vals > LOG_EPS
    g[rows[live], cols[live]] = -1.0 / (sem.kappa * vals[live])
    return g
