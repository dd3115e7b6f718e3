"""Full-batch training with Adam, validation-based model selection and baselines."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ContractError
from .graph import HeteroGraph, Splits, split_nodes
from .metapath import (
    FirstOrderSet,
    MetaPathSpec,
    SubsetEnumeration,
    build_first_order_set,
    enumerate_subsets,
    order_mass,
)
from .model import (
    ForwardCache,
    Gradients,
    ModelParams,
    backward,
    build_structure,
    ce_loss,
    forward,
    init_params,
    save_checkpoint,
)
from .semantic import METRICS, SemanticAdjacency, build_semantic_adjacency, rec_loss

log = logging.getLogger(__name__)

EPOCH_COLUMNS = ("epoch", "loss", "ce", "rec", "train_macro", "train_micro", "val_macro", "val_micro")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.1
    k: int = 50
    metric: str = "cosine"
    bandwidth: float | None = None
    lr: float = 0.01
    epochs: int = 500
    seed: int = 0
    split_ratios: tuple[float, float, float] | None = None  # None: use the dataset's splits
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int | None = None

    def validate(self, n: int | None = None) -> "TrainConfig":
        if not self.lr > 0:
            raise ArgumentError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.gamma < 0:
            raise ArgumentError(f"gamma must be >= 0, got {self.gamma}")
        if self.metric not in METRICS:
            raise ArgumentError(f"unknown metric {self.metric!r}")
        if self.k < 1 or (n is not None and self.k >= n):
            raise ArgumentError(f"need 1 <= k < n, got k={self.k}, n={n}")
        if self.patience is not None and self.patience < 1:
            raise ArgumentError("patience must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["split_ratios"] is not None:
            d["split_ratios"] = list(d["split_ratios"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("split_ratios") is not None:
            d["split_ratios"] = tuple(float(r) for r in d["split_ratios"])
        return cls(**d)


# ---------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        arrs = params.arrays()
        return cls([np.zeros_like(a) for a in arrs], [np.zeros_like(a) for a in arrs], 0, beta1, beta2, eps)


def adam_step(state: AdamState, params: ModelParams, grads: Gradients, lr: float) -> tuple[AdamState, ModelParams]:
    p_arrs, g_arrs = params.arrays(), grads.arrays()
    if len(p_arrs) != len(g_arrs) or len(p_arrs) != len(state.m):
        raise ContractError("optimizer state, parameters and gradients disagree in length")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(p_arrs, g_arrs, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    out = ModelParams(new_p[2:], new_p[1], new_p[0])
    return AdamState(new_m, new_v, t, b1, b2, state.eps), out


# ------------------------------------------------------------------- metrics


def f1_scores(y_true, y_pred, n_classes: int) -> tuple[float, float]:
    """Macro and micro F1; a class with no true and no predicted members scores 0."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ArgumentError("cannot score an empty index set")
    per_class = []
    for k in range(n_classes):
        tp = np.sum((y_pred == k) & (y_true == k))
        fp = np.sum((y_pred == k) & (y_true != k))
        fn = np.sum((y_pred != k) & (y_true == k))
        denom = 2 * tp + fp + fn
        per_class.append(2 * tp / denom if denom else 0.0)
    micro = float(np.mean(y_true == y_pred))
    return float(np.mean(per_class)), micro


def evaluate(cache: ForwardCache, labels, index_set) -> tuple[float, float]:
    idx = np.asarray(index_set, dtype=np.int64)
    if idx.size == 0:
        raise ArgumentError("evaluate needs a non-empty index set")
    pred = np.argmax(cache.probs[idx], axis=1)
    return f1_scores(np.asarray(labels)[idx], pred, cache.probs.shape[1])


# -------------------------------------------------------------------- runs


@dataclass
class RunRecord:
    config: dict
    metapaths: list[str]
    branches: list[str]
    baseline: str | None
    epochs: list[dict]
    best_epoch: int
    beta: list[float]
    order_mass: dict[int, float]
    val_macro_f1: float
    val_micro_f1: float
    test_macro_f1: float | None
    test_micro_f1: float | None
    params: ModelParams | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "metapaths": self.metapaths,
            "branches": self.branches,
            "baseline": self.baseline,
            "best_epoch": self.best_epoch,
            "beta": self.beta,
            "order_mass": {str(k): v for k, v in self.order_mass.items()},
            "val_macro_f1": self.val_macro_f1,
            "val_micro_f1": self.val_micro_f1,
            "test_macro_f1": self.test_macro_f1,
            "test_micro_f1": self.test_micro_f1,
            "epochs": self.epochs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def epochs_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(EPOCH_COLUMNS)
        for row in self.epochs:
            writer.writerow([row[c] if c == "epoch" else repr(row[c]) for c in EPOCH_COLUMNS])
        return buf.getvalue()

    def write(self, out_dir, checkpoint: str | Path | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run.json").write_text(self.to_json(), encoding="utf-8")
        (out / "epochs.csv").write_text(self.epochs_csv(), encoding="utf-8")
        if checkpoint is not None:
            self.save_checkpoint(checkpoint)
        return out

    def save_checkpoint(self, path) -> Path:
        if self.params is None:
            raise ContractError("run record carries no parameters")
        return save_checkpoint(
            path, self.params, self.extra["enumeration"], self.metapaths, self.config,
            extra={
                "specs": [s.to_json() for s in self.extra["specs"]],
                "fixed_beta": self.extra.get("fixed_beta"),
                "best_epoch": self.best_epoch,
                "test_macro_f1": self.test_macro_f1,
                "test_micro_f1": self.test_micro_f1,
            },
        )


def resolve_splits(g: HeteroGraph, cfg: TrainConfig) -> Splits:
    if cfg.split_ratios is None:
        return g.splits
    # subordinate seed: split draws never share a stream with parameter init
    return split_nodes(g.n_target, cfg.split_ratios, cfg.seed + 1)


def parse_baseline(which, L: int) -> tuple[str, int | None]:
    if isinstance(which, (int, np.integer)):
        kind, j = "single", int(which)
    elif which == "uniform":
        kind, j = "uniform", None
    elif isinstance(which, str) and which.startswith("single:"):
        try:
            kind, j = "single", int(which.split(":", 1)[1])
        except ValueError:
            raise ArgumentError(f"malformed baseline {which!r}; use single:<j> or uniform") from None
    else:
        raise ArgumentError(f"unknown baseline {which!r}; use single:<j> or uniform")
    if kind == "single" and not 0 <= j < L:
        raise ArgumentError(f"baseline meta-path index {j} outside 0..{L - 1}")
    return kind, j


def baseline_beta(enumeration: SubsetEnumeration, which) -> np.ndarray:
    """Fixed branch weights: one-hot on first-order branch ``j``, or uniform over first-order branches."""
    kind, j = parse_baseline(which, enumeration.L)
    beta = np.zeros(enumeration.n_branches)
    if kind == "single":
        beta[j] = 1.0  # first-order branches come first, in meta-path order
    else:
        beta[: enumeration.L] = 1.0 / enumeration.L
    return beta


def train(g: HeteroGraph, specs, cfg: TrainConfig, baseline=None) -> RunRecord:
    specs = list(specs) if specs else list(g.metapaths)
    if not specs:
        raise ArgumentError("no meta-paths given and the dataset declares none")
    cfg.validate(g.n_target)
    splits = resolve_splits(g, cfg)
    splits.validate(g.n_target)
    labels = g.labels
    first: FirstOrderSet = build_first_order_set(g, specs)
    enumeration = enumerate_subsets(first.L)
    sem: SemanticAdjacency = build_semantic_adjacency(g.features, cfg.k, cfg.metric, cfg.bandwidth)
    params = init_params(enumeration, g.features.shape[1], g.num_classes, cfg.seed)
    state = AdamState.for_params(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    fixed_beta = None
    structure = None
    if baseline is not None:
        fixed_beta = baseline_beta(enumeration, baseline)
        structure = build_structure(params, first, enumeration, beta=fixed_beta)

    select_idx = splits.val if len(splits.val) else splits.train
    history: list[dict] = []
    best = (-1.0, -1, None, None)  # (val_micro, epoch, params, cache)
    stale = 0
    for epoch in range(cfg.epochs):
        cache = forward(params, g, first, enumeration, structure=structure)
        ce = ce_loss(cache, labels, splits.train)
        rec = rec_loss(cache.multi_order, sem)
        total = ce + cfg.gamma * rec if cfg.gamma > 0 else ce
        tr = evaluate(cache, labels, splits.train)
        va = evaluate(cache, labels, splits.val) if len(splits.val) else (float("nan"), float("nan"))
        history.append({
            "epoch": epoch, "loss": total, "ce": ce, "rec": rec,
            "train_macro": tr[0], "train_micro": tr[1], "val_macro": va[0], "val_micro": va[1],
        })
        score = evaluate(cache, labels, select_idx)[1]
        if score >= best[0]:
            best = (score, epoch, params, cache)
            stale = 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                log.info("early stop at epoch %d", epoch)
                break
        grads = backward(cache, params, labels, splits.train, sem, cfg.gamma)
        state, params = adam_step(state, params, grads, cfg.lr)

    _, best_epoch, best_params, best_cache = best
    test = evaluate(best_cache, labels, splits.test) if len(splits.test) else (None, None)
    beta = best_cache.beta
    return RunRecord(
        config=cfg.to_dict(),
        metapaths=first.names,
        branches=enumeration.branch_names(first.names),
        baseline=None if baseline is None else str(baseline),
        epochs=history,
        best_epoch=best_epoch,
        beta=[float(b) for b in beta],
        order_mass=order_mass(enumeration, beta),
        val_macro_f1=history[best_epoch]["val_macro"],
        val_micro_f1=history[best_epoch]["val_micro"],
        test_macro_f1=test[0],
        test_micro_f1=test[1],
        params=best_params,
        extra={"enumeration": enumeration, "specs": specs, "fixed_beta": None if fixed_beta is None else list(fixed_beta)},
    )


def run_fixed_metapath_baseline(g: HeteroGraph, specs, cfg: TrainConfig, which) -> RunRecord:
    """Train only ``W`` on a frozen single meta-path or the uniform first-order fusion."""
    specs = list(specs) if specs else list(g.metapaths)
    parse_baseline(which, len(specs))
    return train(g, specs, cfg, baseline=which)


def evaluate_checkpoint(g: HeteroGraph, params: ModelParams, meta: dict) -> dict:
    """Recompute split metrics for a checkpoint written by :meth:`RunRecord.save_checkpoint`."""
    specs = [MetaPathSpec.from_json(s) for s in meta.get("specs", [])] or list(g.metapaths)
    cfg = TrainConfig.from_dict(meta.get("config", {}))
    first = build_first_order_set(g, specs)
    enumeration = enumerate_subsets(first.L)
    structure = None
    if meta.get("fixed_beta") is not None:
        structure = build_structure(params, first, enumeration, beta=meta["fixed_beta"])
    cache = forward(params, g, first, enumeration, structure=structure)
    splits = resolve_splits(g, cfg)
    out = {}
    for name in ("train", "val", "test"):
        idx = getattr(splits, name)
        if len(idx):
            macro, micro = evaluate(cache, g.labels, idx)
            out[name] = {"macro_f1": macro, "micro_f1": micro}
    return out
