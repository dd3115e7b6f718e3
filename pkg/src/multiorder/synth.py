"""Seeded planted-partition heterogeneous graphs.

The target type carries class-centroid-plus-noise features. Centroids form
a zero-mean simplex of equal norm ``centroid_scale``, so a bias-free linear
head can separate them. Each entry of
``SynthConfig.relations`` adds one auxiliary node type and wires targets to it:

``informative``
    auxiliary nodes belong to classes; a target links to an auxiliary node
    with probability ``p_in`` when the classes agree, ``p_out`` otherwise.
    The meta-path ``R R^T`` therefore has planted communities.
``noisy``
    every target-auxiliary pair links with probability ``p_noise``.
``cross``
    two relations into the same auxiliary type, one keyed on the label and
    one on a hidden per-node group drawn independently of the label. The
    meta-path ``R_label R_group^T`` joins ``i`` to ``j`` when ``y_i`` equals
    ``group_j``, so it says nothing about ``y_i`` on its own; its square
    reaches same-class nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .graph import HeteroGraph, NodeType, RelationMatrix, split_nodes
from .metapath import MetaPathSpec
from .sparse import SparseMatrix

RELATION_KINDS = ("informative", "noisy", "cross")


@dataclass(frozen=True)
class SynthConfig:
    n: int = 300
    n_classes: int = 3
    relations: tuple[str, ...] = ("informative", "noisy", "noisy")
    aux_size: int = 60
    p_in: float = 0.5
    p_out: float = 0.005
    p_noise: float = 0.05
    n_features: int = 3
    feature_noise: float = 2.8
    centroid_scale: float = 2.0
    split_ratios: tuple[float, float, float] = (0.2, 0.1, 0.1)

    def validate(self):
        if self.n_classes < 2:
            raise ArgumentError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_classes > self.n:
            raise ArgumentError(f"{self.n_classes} classes cannot fit in {self.n} target nodes")
        if not self.relations:
            raise ArgumentError("need at least one relation")
        for kind in self.relations:
            if kind not in RELATION_KINDS:
                raise ArgumentError(f"unknown relation kind {kind!r}; choose from {RELATION_KINDS}")
        if self.aux_size < self.n_classes:
            raise ArgumentError("aux_size must be at least n_classes")
        for name in ("p_in", "p_out", "p_noise"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ArgumentError(f"{name} must lie in [0, 1], got {p}")
        if self.n_features < 1 or self.feature_noise < 0 or self.centroid_scale < 0:
            raise ArgumentError("need n_features >= 1, feature_noise >= 0, centroid_scale >= 0")
        return self


def _bernoulli_relation(rng, prob: np.ndarray) -> SparseMatrix:
    hits = rng.random(prob.shape) < prob
    rows, cols = np.nonzero(hits)
    return SparseMatrix.from_coo(rows, cols, np.ones(len(rows)), prob.shape)


def _simplex_centroids(rng, c: int, f: int, scale: float) -> np.ndarray:
    """``c`` zero-mean centroids of norm ``scale`` in ``R^f``.

    They are the vertices of a regular simplex whenever ``f >= c - 1``.
    """
    if f >= c - 1:
        # orthonormal basis of the sum-zero subspace of R^c, rotated into R^f
        basis = np.linalg.qr(np.eye(c) - 1.0 / c)[0][:, : c - 1]
        vertices = (np.eye(c) - 1.0 / c) @ basis
        rot = np.linalg.qr(rng.normal(size=(f, f)))[0][:, : c - 1]
        cent = vertices @ rot.T
    else:
        raw = rng.normal(size=(c, f))
        cent = raw - raw.mean(axis=0)
    norms = np.linalg.norm(cent, axis=1, keepdims=True)
    return scale * cent / np.where(norms > 0, norms, 1.0)


def generate_synthetic(cfg: SynthConfig, seed: int) -> HeteroGraph:
    cfg.validate()
    rng = np.random.default_rng(seed)
    n, c = cfg.n, cfg.n_classes
    labels = rng.permutation(np.arange(n) % c).astype(np.int64)
    groups = rng.integers(0, c, size=n)
    centroids = _simplex_centroids(rng, c, cfg.n_features, cfg.centroid_scale)
    X = centroids[labels] + cfg.feature_noise * rng.normal(size=(n, cfg.n_features))

    node_types = [NodeType(0, "target", n, X)]
    relations: list[RelationMatrix] = []
    metapaths: list[MetaPathSpec] = []
    aux_class = np.arange(cfg.aux_size) % c

    def keyed(key):
        same = key[:, None] == aux_class[None, :]
        return np.where(same, cfg.p_in, cfg.p_out)

    for pos, kind in enumerate(cfg.relations):
        tid = pos + 1
        node_types.append(NodeType(tid, f"aux{tid}", cfg.aux_size))
        if kind == "cross":
            r_lab, r_grp = len(relations), len(relations) + 1
            relations.append(RelationMatrix(r_lab, f"label{tid}", 0, tid, _bernoulli_relation(rng, keyed(labels))))
            relations.append(RelationMatrix(r_grp, f"group{tid}", 0, tid, _bernoulli_relation(rng, keyed(groups))))
            metapaths.append(MetaPathSpec(f"cross{tid}", ((r_lab, False), (r_grp, True))))
            continue
        if kind == "informative":
            prob = keyed(labels)
        else:
            prob = np.full((n, cfg.aux_size), cfg.p_noise)
        rid = len(relations)
        relations.append(RelationMatrix(rid, f"{kind}{tid}", 0, tid, _bernoulli_relation(rng, prob)))
        metapaths.append(MetaPathSpec(f"{kind}{tid}", ((rid, False), (rid, True))))

    splits = split_nodes(n, cfg.split_ratios, seed + 1)
    return HeteroGraph(node_types, relations, 0, labels, c, splits, metapaths).validate()
