"""One-layer multi-order graph convolution with hand-derived gradients.

Forward::

    alpha_b   = row_softmax(alpha_logits_b)               per branch b
    beta      = softmax(beta_logits)
    A_b       = normalize(undirected(prod_i sum_j alpha_b[i, j] A_{s_j}))
    A_multi   = sum_b beta_b A_b
    P         = row_softmax(A_multi X W)

Loss is cross-entropy on the training rows plus ``gamma`` times the
reconstruction loss of ``A_multi`` against the semantic adjacency.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ContractError, DomainError, ShapeError
from .metapath import (
    FirstOrderSet,
    HighOrderBasis,
    SubsetEnumeration,
    aggregate_multi_order,
    assemble_basis,
)
from .semantic import SemanticAdjacency, rec_loss, rec_loss_grad
from .sparse import SparseMatrix, softmax_rows, spmm_sd

CHECKPOINT_FORMAT = "multiorder-checkpoint/1"


@dataclass
class ModelParams:
    alpha_logits: list[np.ndarray]
    beta_logits: np.ndarray
    W: np.ndarray

    def copy(self) -> "ModelParams":
        return ModelParams([a.copy() for a in self.alpha_logits], self.beta_logits.copy(), self.W.copy())

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W, beta_logits, *alpha_logits]``; the order optimizers rely on."""
        return [self.W, self.beta_logits, *self.alpha_logits]

    def same_as(self, other: "ModelParams") -> bool:
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(np.array_equal(a, b) for a, b in zip(mine, theirs))


def init_params(enumeration: SubsetEnumeration, n_features: int, n_classes: int, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    alphas = [rng.uniform(0.0, 1.0, size=(b.order, b.order)) for b in enumeration.branches]
    bound = np.sqrt(6.0 / (n_features + n_classes))
    W = rng.uniform(-bound, bound, size=(n_features, n_classes))
    return ModelParams(alphas, np.zeros(enumeration.n_branches), W)


@dataclass
class Structure:
    """Everything in the forward pass that does not depend on ``W``."""

    alphas: list[np.ndarray]
    beta: np.ndarray
    basis: HighOrderBasis
    multi_order: SparseMatrix


def build_structure(params: ModelParams, first: FirstOrderSet, enumeration: SubsetEnumeration,
                    beta=None) -> Structure:
    alphas = [softmax_rows(a) for a in params.alpha_logits]
    beta = softmax_rows(params.beta_logits) if beta is None else np.asarray(beta, dtype=np.float64)
    basis = assemble_basis(first, enumeration, alphas)
    return Structure(alphas, beta, basis, aggregate_multi_order(basis, beta))


@dataclass
class ForwardCache:
    snapshot: ModelParams
    first: FirstOrderSet
    enumeration: SubsetEnumeration
    structure: Structure
    X: np.ndarray
    propagated: np.ndarray  # A_multi @ X
    logits: np.ndarray
    log_probs: np.ndarray
    probs: np.ndarray
    frozen_structure: bool = False

    @property
    def multi_order(self) -> SparseMatrix:
        return self.structure.multi_order

    @property
    def beta(self) -> np.ndarray:
        return self.structure.beta

    @property
    def alphas(self) -> list[np.ndarray]:
        return self.structure.alphas


def _features(g_or_x) -> np.ndarray:
    return np.asarray(getattr(g_or_x, "features", g_or_x), dtype=np.float64)


def forward(params: ModelParams, g, first: FirstOrderSet, enumeration: SubsetEnumeration,
            structure: Structure | None = None) -> ForwardCache:
    """Run the model. ``g`` may be a HeteroGraph or the target feature matrix.

    Passing a precomputed ``structure`` freezes alpha and beta to it.
    """
    X = _features(g)
    if X.ndim != 2 or X.shape[0] != first.n:
        raise ShapeError(f"features have shape {X.shape}, adjacency is {first.n}x{first.n}")
    if params.W.shape[0] != X.shape[1]:
        raise ShapeError(f"W has shape {params.W.shape}, features have {X.shape[1]} columns")
    if len(params.alpha_logits) != enumeration.n_branches or params.beta_logits.shape != (enumeration.n_branches,):
        raise ShapeError("parameter shapes do not match the branch enumeration")
    frozen = structure is not None
    if structure is None:
        structure = build_structure(params, first, enumeration)
    propagated = spmm_sd(structure.multi_order, X)
    logits = propagated @ params.W
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return ForwardCache(params.copy(), first, enumeration, structure, X, propagated, logits,
                        log_probs, np.exp(log_probs), frozen)


def _check_labels(labels, idx, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(idx, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)[idx]
    if np.any((y < 0) | (y >= n_classes)):
        bad = y[(y < 0) | (y >= n_classes)][0]
        raise DomainError(f"label {bad} outside 0..{n_classes - 1}")
    return idx, y


def ce_loss(cache: ForwardCache, labels, train_idx) -> float:
    idx, y = _check_labels(labels, train_idx, cache.probs.shape[1])
    if len(idx) == 0:
        raise DomainError("cross-entropy needs a non-empty training set")
    return float(-cache.log_probs[idx, y].sum())


def total_loss(cache: ForwardCache, labels, train_idx, sem: SemanticAdjacency | None, gamma: float) -> float:
    if gamma < 0:
        raise DomainError(f"gamma must be non-negative, got {gamma}")
    ce = ce_loss(cache, labels, train_idx)
    if gamma == 0:
        return ce
    return ce + gamma * rec_loss(cache.multi_order, sem)


@dataclass
class Gradients:
    W: np.ndarray
    beta_logits: np.ndarray
    alpha_logits: list[np.ndarray] = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.beta_logits, *self.alpha_logits]


def _contract(G: np.ndarray, m: SparseMatrix) -> float:
    """Frobenius inner product of dense ``G`` with sparse ``m``."""
    if m.nnz == 0:
        return 0.0
    rows = np.repeat(np.arange(m.n_rows), np.diff(m.row_offsets))
    return float(np.dot(G[rows, m.col_indices], m.values))


def _normalize_backward(G_norm: np.ndarray, normalized: SparseMatrix, degrees: np.ndarray) -> np.ndarray:
    """Pull a gradient back through ``D^-1/2 (B + I) D^-1/2`` to ``B``; degrees are not constants."""
    N = normalized.to_dense()
    inv_sqrt = 1.0 / np.sqrt(degrees)
    GN = G_norm * N
    g_deg = -0.5 / degrees * (GN.sum(axis=1) + GN.sum(axis=0))
    return G_norm * np.outer(inv_sqrt, inv_sqrt) + g_deg[:, None]


def _alpha_grad(G_branch: np.ndarray, trace, basis_mats: list[SparseMatrix], alpha: np.ndarray) -> np.ndarray:
    l = alpha.shape[0]
    G_B = _normalize_backward(G_branch, trace.normalized, trace.degrees)
    G_M = G_B + G_B.T - np.diag(np.diag(G_B))
    F = [f.to_dense() for f in trace.factors]
    # right[i] = G_M (F_{i+1} ... F_{l-1})^T
    right = [None] * l
    right[l - 1] = G_M
    for i in range(l - 2, -1, -1):
        right[i] = right[i + 1] @ F[i + 1].T
    g_alpha = np.zeros((l, l))
    left = None  # F_0 ... F_{i-1}
    for i in range(l):
        G_F = right[i] if left is None else left.T @ right[i]
        for j, A in enumerate(basis_mats):
            g_alpha[i, j] = _contract(G_F, A)
        left = F[i] if left is None else left @ F[i]
    return g_alpha


def _softmax_backward(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pull ``g`` back through a softmax over the last axis with output ``p``."""
    return p * (g - np.sum(p * g, axis=-1, keepdims=True))


def backward(cache: ForwardCache, params: ModelParams, labels, train_idx,
             sem: SemanticAdjacency | None, gamma: float) -> Gradients:
    """Exact gradient of :func:`total_loss` for W, beta logits and alpha logits."""
    if not cache.snapshot.same_as(params):
        raise ContractError("parameters changed since forward(); recompute the cache")
    idx, y = _check_labels(labels, train_idx, cache.probs.shape[1])
    G_logits = np.zeros_like(cache.probs)
    G_logits[idx] = cache.probs[idx]
    np.add.at(G_logits, (idx, y), -1.0)

    gW = cache.propagated.T @ G_logits
    n_b = cache.enumeration.n_branches
    alpha_grads = [np.zeros_like(a) for a in params.alpha_logits]
    if cache.frozen_structure:
        return Gradients(gW, np.zeros(n_b), alpha_grads)

    G_multi = G_logits @ (cache.X @ params.W).T
    if gamma > 0:
        G_multi = G_multi + gamma * rec_loss_grad(cache.multi_order, sem)

    struct = cache.structure
    g_beta = np.array([_contract(G_multi, m) for m in struct.basis.matrices])
    g_beta_logits = _softmax_backward(struct.beta, g_beta)

    for b, (branch, trace) in enumerate(zip(struct.basis.branches, struct.basis.traces)):
        if branch.order == 1:
            continue  # 1x1 softmax is constant
        basis_mats = [cache.first.matrices[j] for j in branch.subset]
        g_alpha = _alpha_grad(struct.beta[b] * G_multi, trace, basis_mats, struct.alphas[b])
        alpha_grads[b] = _softmax_backward(struct.alphas[b], g_alpha)
    return Gradients(gW, g_beta_logits, alpha_grads)


# ------------------------------------------------------------------ gradcheck


def _rel_err(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def finite_diff_check(params: ModelParams, g, first: FirstOrderSet, enumeration: SubsetEnumeration,
                      sem: SemanticAdjacency | None, gamma: float, step: float = 1e-5,
                      labels=None, train_idx=None, max_coords: int | None = None,
                      seed: int = 0, floor: float = 1e-8) -> dict:
    """Compare :func:`backward` with central differences, coordinate by coordinate.

    Returns ``{group: {"max": .., "mean": .., "checked": ..}}`` for the groups
    ``W``, ``beta`` and ``alpha``. Relative errors use ``max(|a|, |b|, floor)``
    as denominator.
    """
    if step <= 0:
        raise DomainError("finite-difference step must be positive")
    labels = g.labels if labels is None else labels
    train_idx = g.splits.train if train_idx is None else train_idx

    def loss_at(p):
        return total_loss(forward(p, g, first, enumeration), labels, train_idx, sem, gamma)

    cache = forward(params, g, first, enumeration)
    grads = backward(cache, params, labels, train_idx, sem, gamma)
    rng = np.random.default_rng(seed)

    groups = {
        "W": [(0, None)],
        "beta": [(1, None)],
        "alpha": [(2 + b, None) for b, br in enumerate(enumeration.branches) if br.order > 1],
    }
    report = {}
    for name, slots in groups.items():
        coords = [(k, ix) for k, _ in slots for ix in np.ndindex(params.arrays()[k].shape)]
        if max_coords is not None and len(coords) > max_coords:
            pick = np.sort(rng.choice(len(coords), size=max_coords, replace=False))
            coords = [coords[i] for i in pick]
        errs = []
        for k, ix in coords:
            plus, minus = params.copy(), params.copy()
            plus.arrays()[k][ix] += step
            minus.arrays()[k][ix] -= step
            numeric = (loss_at(plus) - loss_at(minus)) / (2 * step)
            errs.append(_rel_err(grads.arrays()[k][ix], numeric, floor))
        report[name] = {
            "max": float(max(errs)) if errs else 0.0,
            "mean": float(np.mean(errs)) if errs else 0.0,
            "checked": len(errs),
        }
    return report


# ---------------------------------------------------------------- checkpoints


def config_hash(config: dict | None) -> str:
    blob = json.dumps(config or {}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _pack(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "values": [float(v) for v in np.ravel(a)]}


def _unpack(obj) -> np.ndarray:
    return np.asarray(obj["values"], dtype=np.float64).reshape(obj["shape"])


def checkpoint_dict(params: ModelParams, enumeration: SubsetEnumeration, names: list[str],
                    config: dict | None = None, extra: dict | None = None) -> dict:
    out = {
        "format": CHECKPOINT_FORMAT,
        "config_hash": config_hash(config),
        "config": config or {},
        "metapaths": list(names),
        "branches": [{"order": b.order, "index": b.index, "subset": list(b.subset)} for b in enumeration.branches],
        "W": _pack(params.W),
        "beta_logits": _pack(params.beta_logits),
        "alpha_logits": [_pack(a) for a in params.alpha_logits],
    }
    if extra:
        out.update(extra)
    return out


def save_checkpoint(path, params: ModelParams, enumeration: SubsetEnumeration, names: list[str],
                    config: dict | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    # json writes floats with repr(), which round-trips float64 exactly
    path.write_text(json.dumps(checkpoint_dict(params, enumeration, names, config, extra), indent=1) + "\n",
                    encoding="utf-8")
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    try:
        obj = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: not UTF-8 at byte offset {exc.start}") from None
    except json.JSONDecodeError as exc:
        offset = len(raw.decode("utf-8")[: exc.pos].encode("utf-8"))
        raise CheckpointError(f"{path}: corrupt checkpoint, {exc.msg} at byte offset {offset}") from None
    if not isinstance(obj, dict) or obj.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    try:
        params = ModelParams(
            [_unpack(a) for a in obj["alpha_logits"]],
            _unpack(obj["beta_logits"]),
            _unpack(obj["W"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint field ({exc})") from None
    return params, obj
