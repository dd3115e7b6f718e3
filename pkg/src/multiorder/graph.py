"""Attributed heterogeneous graphs: data model, on-disk format, splits.

Dataset directory layout::

    manifest.json         node types, relations, target type, class count,
                          optional meta-path specs
    features_<type>.tsv   one row of tab-separated reals per node
    relation_<id>.tsv     src <tab> dst [<tab> weight]
    labels.tsv            node <tab> class
    splits.tsv            node <tab> train|val|test

Indices are zero-based and lines starting with ``#`` are comments.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ValidationError
from .sparse import SparseMatrix

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class NodeType:
    id: int
    name: str
    count: int
    features: np.ndarray | None = None


@dataclass(frozen=True)
class RelationMatrix:
    id: int
    name: str
    src_type: int
    dst_type: int
    matrix: SparseMatrix


@dataclass(frozen=True)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, n: int):
        sets = [set(map(int, s)) for s in (self.train, self.val, self.test)]
        for name, s, arr in zip(SPLIT_NAMES, sets, (self.train, self.val, self.test)):
            if len(s) != len(arr):
                raise ValidationError(f"split '{name}' lists a node twice")
            bad = [i for i in s if i < 0 or i >= n]
            if bad:
                raise ValidationError(f"split '{name}' references node {bad[0]} outside 0..{n - 1}")
        for a in range(3):
            for b in range(a + 1, 3):
                common = sets[a] & sets[b]
                if common:
                    raise ValidationError(
                        f"splits '{SPLIT_NAMES[a]}' and '{SPLIT_NAMES[b]}' share node {min(common)}"
                    )
        if not sets[0]:
            raise ValidationError("train split is empty")


@dataclass(frozen=True)
class HeteroGraph:
    node_types: list[NodeType]
    relations: list[RelationMatrix]
    target_type: int
    labels: np.ndarray  # class id per target node, -1 where unlabeled
    num_classes: int
    splits: Splits
    metapaths: list = field(default_factory=list)

    def node_type(self, type_id: int) -> NodeType:
        for t in self.node_types:
            if t.id == type_id:
                return t
        raise ValidationError(f"unknown node type id {type_id}")

    def relation(self, rel_id: int) -> RelationMatrix:
        for r in self.relations:
            if r.id == rel_id:
                return r
        raise ValidationError(f"unknown relation id {rel_id}")

    @property
    def target(self) -> NodeType:
        return self.node_type(self.target_type)

    @property
    def features(self) -> np.ndarray:
        return self.target.features

    @property
    def n_target(self) -> int:
        return self.target.count

    def validate(self):
        if len(self.node_types) + len(self.relations) <= 2:
            raise ValidationError("a heterogeneous graph needs |node types| + |relations| > 2")
        ids = [t.id for t in self.node_types]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate node type id")
        for t in self.node_types:
            if t.count < 1:
                raise ValidationError(f"node type '{t.name}' has count {t.count}")
            if t.features is not None:
                if t.features.ndim != 2 or t.features.shape[0] != t.count:
                    raise ValidationError(
                        f"features of '{t.name}' have {t.features.shape[0]} rows, expected {t.count}"
                    )
                if not np.all(np.isfinite(t.features)):
                    raise ValidationError(f"features of '{t.name}' contain non-finite values")
        for r in self.relations:
            src, dst = self.node_type(r.src_type), self.node_type(r.dst_type)
            if r.matrix.shape != (src.count, dst.count):
                raise ValidationError(
                    f"relation {r.id} has shape {r.matrix.shape}, expected ({src.count}, {dst.count})"
                )
            if r.matrix.nnz and r.matrix.values.min() < 0:
                raise ValidationError(f"relation {r.id} has a negative weight")
        target = self.target
        if target.features is None:
            raise ValidationError(f"target type '{target.name}' has no features")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be positive")
        if self.labels.shape != (target.count,):
            raise ValidationError("labels must have one entry per target node")
        bad = np.flatnonzero((self.labels < -1) | (self.labels >= self.num_classes))
        if len(bad):
            raise ValidationError(
                f"label {self.labels[bad[0]]} of node {bad[0]} outside 0..{self.num_classes - 1}"
            )
        self.splits.validate(target.count)
        for name, idx in zip(SPLIT_NAMES, (self.splits.train, self.splits.val, self.splits.test)):
            unl = [int(i) for i in idx if self.labels[i] < 0]
            if unl:
                raise ValidationError(f"node {unl[0]} in split '{name}' has no label")
        return self


def split_nodes(n: int, ratios, seed: int) -> Splits:
    """Seeded random split with ``floor(ratio * n)`` nodes per part."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or ratios[0] <= 0:
        raise ArgumentError(f"split ratios must be three non-negative numbers with train > 0: {ratios}")
    if sum(ratios) > 1.0 + 1e-12:
        raise ArgumentError(f"split ratios sum to {sum(ratios)} > 1")
    sizes = [int(np.floor(r * n + 1e-9)) for r in ratios]
    perm = np.random.default_rng(seed).permutation(n)
    a, b, c = sizes
    return Splits(
        np.sort(perm[:a]),
        np.sort(perm[a : a + b]),
        np.sort(perm[a + b : a + b + c]),
    )


# ---------------------------------------------------------------- on-disk I/O


def _data_lines(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path.name} (in {path.parent})")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def _read_features(path: Path, count: int) -> np.ndarray:
    rows = []
    for lineno, parts in _data_lines(path):
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ValidationError(f"{path.name}:{lineno}: non-numeric feature") from None
    if len(rows) != count:
        raise ValidationError(f"{path.name}: {len(rows)} feature rows, expected {count}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{path.name}: ragged feature rows")
    return np.asarray(rows, dtype=np.float64)


def _read_relation(path: Path, n_src: int, n_dst: int) -> SparseMatrix:
    rows, cols, vals = [], [], []
    for lineno, parts in _data_lines(path):
        if len(parts) not in (2, 3):
            raise ValidationError(f"{path.name}:{lineno}: expected src, dst[, weight]")
        try:
            s, d = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ValidationError(f"{path.name}:{lineno}: malformed edge") from None
        if not (0 <= s < n_src):
            raise ValidationError(f"{path.name}:{lineno}: edge source node {s} outside 0..{n_src - 1}")
        if not (0 <= d < n_dst):
            raise ValidationError(f"{path.name}:{lineno}: edge target node {d} outside 0..{n_dst - 1}")
        if not np.isfinite(w) or w < 0:
            raise ValidationError(f"{path.name}:{lineno}: edge weight must be finite and non-negative")
        rows.append(s)
        cols.append(d)
        vals.append(w)
    return SparseMatrix.from_coo(rows, cols, vals, (n_src, n_dst))


def load_dataset(path) -> HeteroGraph:
    from .metapath import MetaPathSpec

    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing dataset file: manifest.json (in {root})")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest.json: invalid JSON at byte {exc.pos}") from None
    try:
        types_meta = manifest["node_types"]
        rel_meta = manifest["relations"]
        target_type = int(manifest["target_type"])
        num_classes = int(manifest["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"manifest.json: missing or malformed field {exc}") from None

    node_types = []
    for t in types_meta:
        tid, name, count = int(t["id"]), str(t["name"]), int(t["count"])
        fpath = root / f"features_{name}.tsv"
        if tid == target_type or fpath.exists():
            feats = _read_features(fpath, count)
        else:
            feats = None
        node_types.append(NodeType(tid, name, count, feats))
    counts = {t.id: t.count for t in node_types}

    relations = []
    for r in rel_meta:
        rid, src, dst = int(r["id"]), int(r["src"]), int(r["dst"])
        if src not in counts or dst not in counts:
            raise ValidationError(f"relation {rid} references an unknown node type")
        mat = _read_relation(root / f"relation_{rid}.tsv", counts[src], counts[dst])
        relations.append(RelationMatrix(rid, str(r.get("name", f"R{rid}")), src, dst, mat))

    if target_type not in counts:
        raise ValidationError(f"target_type {target_type} is not a declared node type")
    n = counts[target_type]
    labels = np.full(n, -1, dtype=np.int64)
    for lineno, parts in _data_lines(root / "labels.tsv"):
        try:
            i, y = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise ValidationError(f"labels.tsv:{lineno}: malformed line") from None
        if not (0 <= i < n):
            raise ValidationError(f"labels.tsv:{lineno}: node {i} outside 0..{n - 1}")
        if not (0 <= y < num_classes):
            raise ValidationError(f"labels.tsv:{lineno}: class {y} of node {i} outside 0..{num_classes - 1}")
        if labels[i] >= 0:
            raise ValidationError(f"labels.tsv:{lineno}: node {i} labeled twice")
        labels[i] = y

    parts_by_name = {k: [] for k in SPLIT_NAMES}
    for lineno, parts in _data_lines(root / "splits.tsv"):
        if len(parts) != 2 or parts[1] not in parts_by_name:
            raise ValidationError(f"splits.tsv:{lineno}: expected node <tab> train|val|test")
        try:
            parts_by_name[parts[1]].append(int(parts[0]))
        except ValueError:
            raise ValidationError(f"splits.tsv:{lineno}: malformed node index") from None
    splits = Splits(*(np.asarray(sorted(parts_by_name[k]), dtype=np.int64) for k in SPLIT_NAMES))

    metapaths = [MetaPathSpec.from_json(m) for m in manifest.get("metapaths", [])]
    g = HeteroGraph(node_types, relations, target_type, labels, num_classes, splits, metapaths)
    return g.validate()


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(g: HeteroGraph, path) -> Path:
    """Write ``g`` in the directory format read by :func:`load_dataset`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    if not os.access(root, os.W_OK):
        raise PermissionError(f"output directory not writable: {root}")
    manifest = {
        "node_types": [{"id": t.id, "name": t.name, "count": t.count} for t in g.node_types],
        "relations": [
            {"id": r.id, "name": r.name, "src": r.src_type, "dst": r.dst_type} for r in g.relations
        ],
        "target_type": g.target_type,
        "num_classes": g.num_classes,
    }
    if g.metapaths:
        manifest["metapaths"] = [m.to_json() for m in g.metapaths]
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for t in g.node_types:
        if t.features is not None:
            lines = ["\t".join(_fmt(v) for v in row) for row in t.features]
            (root / f"features_{t.name}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for r in g.relations:
        m = r.matrix
        lines = ["# src\tdst\tweight"]
        for i in range(m.n_rows):
            for k in range(m.row_offsets[i], m.row_offsets[i + 1]):
                lines.append(f"{i}\t{m.col_indices[k]}\t{_fmt(m.values[k])}")
        (root / f"relation_{r.id}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    lab = [f"{i}\t{y}" for i, y in enumerate(g.labels) if y >= 0]
    (root / "labels.tsv").write_text("\n".join(lab) + "\n", encoding="utf-8")
    sp_lines = []
    for name, idx in zip(SPLIT_NAMES, (g.splits.train, g.splits.val, g.splits.test)):
        sp_lines.extend(f"{i}\t{name}" for i in idx)
    (root / "splits.tsv").write_text("\n".join(sp_lines) + "\n", encoding="utf-8")
    return root


def graphs_equal(a: HeteroGraph, b: HeteroGraph) -> bool:
    if (a.target_type, a.num_classes) != (b.target_type, b.num_classes):
        return False
    if len(a.node_types) != len(b.node_types) or len(a.relations) != len(b.relations):
        return False
    for s, t in zip(a.node_types, b.node_types):
        if (s.id, s.name, s.count) != (t.id, t.name, t.count):
            return False
        if (s.features is None) != (t.features is None):
            return False
        if s.features is not None and not np.array_equal(s.features, t.features):
            return False
    for r, q in zip(a.relations, b.relations):
        if (r.id, r.name, r.src_type, r.dst_type) != (q.id, q.name, q.src_type, q.dst_type):
            return False
        if not r.matrix.equals(q.matrix):
            return False
    return (
        np.array_equal(a.labels, b.labels)
        and all(
            np.array_equal(x, y)
            for x, y in zip(
                (a.splits.train, a.splits.val, a.splits.test),
                (b.splits.train, b.splits.val, b.splits.test),
            )
        )
        and [m.to_json() for m in a.metapaths] == [m.to_json() for m in b.metapaths]
    )
