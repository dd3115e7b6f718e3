"""Command-line entry point: ``multiorder <subcommand> [flags]``.

Exit codes: 0 success, 1 usage, 2 validation, 3 numeric-check failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .errors import ArgumentError, MultiOrderError
from .graph import load_dataset, write_dataset
from .model import finite_diff_check, load_checkpoint
from .sparse import softmax_rows
from .synth import SynthConfig, generate_synthetic
from .train import TrainConfig, evaluate_checkpoint, run_fixed_metapath_baseline, train

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4

log = logging.getLogger("multiorder")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj, as_json: bool, text: str):
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        print(text)


# -------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    default = SynthConfig().split_ratios
    given = (args.train_ratio, args.val_ratio, args.test_ratio)
    split = tuple(d if r is None else r for r, d in zip(given, default))
    cfg = SynthConfig(
        n=args.n,
        n_classes=args.classes,
        relations=tuple(r.strip() for r in args.relations.split(",") if r.strip()),
        aux_size=args.aux_size,
        p_in=args.p_in,
        p_out=args.p_out,
        p_noise=args.p_noise,
        n_features=args.features,
        feature_noise=args.feature_noise,
        split_ratios=split,
    )
    g = generate_synthetic(cfg, args.seed)
    write_dataset(g, args.out)
    balance = Counter(int(y) for y in g.labels)
    summary = {
        "out": str(args.out),
        "node_counts": {t.name: t.count for t in g.node_types},
        "class_balance": {str(k): balance[k] for k in sorted(balance)},
        "relation_density": {
            r.name: r.matrix.nnz / (r.matrix.n_rows * r.matrix.n_cols) for r in g.relations
        },
        "metapaths": [m.name for m in g.metapaths],
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# -------------------------------------------------------------------- train


TRAIN_FLAGS = {
    "gamma": "gamma",
    "topk": "k",
    "metric": "metric",
    "bandwidth": "bandwidth",
    "lr": "lr",
    "epochs": "epochs",
    "seed": "seed",
    "patience": "patience",
}


def _train_config(args) -> TrainConfig:
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"config file {args.config}: invalid JSON at byte {exc.pos}") from None
        if not isinstance(base, dict):
            raise ArgumentError(f"config file {args.config} must hold a JSON object")
    for flag, fieldname in TRAIN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            base[fieldname] = value
    ratios = (args.train_ratio, args.val_ratio, args.test_ratio)
    if any(r is not None for r in ratios):
        defaults = base.get("split_ratios") or (0.2, 0.1, 0.1)
        base["split_ratios"] = [d if r is None else r for r, d in zip(ratios, defaults)]
    return TrainConfig.from_dict(base)


def _order_percent(order_mass: dict) -> dict:
    return {str(k): 100.0 * v for k, v in sorted(order_mass.items())}


def cmd_train(args, baseline=None) -> int:
    g = load_dataset(args.data)
    cfg = _train_config(args)
    if baseline is None:
        record = train(g, None, cfg)
    else:
        record = run_fixed_metapath_baseline(g, None, cfg, baseline)
    out = Path(args.out)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json"
    record.write(out, checkpoint=ckpt)
    summary = {
        "run": str(out / "run.json"),
        "checkpoint": str(ckpt),
        "best_epoch": record.best_epoch,
        "test_macro_f1": record.test_macro_f1,
        "test_micro_f1": record.test_micro_f1,
        "beta_order_percent": _order_percent(record.order_mass),
    }
    text = [
        f"best epoch {record.best_epoch}",
        f"test Macro-F1 {record.test_macro_f1}  Micro-F1 {record.test_micro_f1}",
        "beta by order: " + ", ".join(f"l={k}: {v:.2f}%" for k, v in summary["beta_order_percent"].items()),
    ]
    _emit(summary, args.json, "\n".join(text))
    return EXIT_OK


def cmd_baseline(args) -> int:
    return cmd_train(args, baseline=args.baseline)


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    from .fixtures import gradcheck_problem

    prob = gradcheck_problem(args.seed)
    report = finite_diff_check(
        prob.params, prob.graph, prob.first, prob.enumeration, prob.sem, args.gamma, step=args.step
    )
    failed = [name for name, r in report.items() if not r["max"] < GRADCHECK_TOL]
    lines = [f"{name:6s} max rel err {r['max']:.3e}  mean {r['mean']:.3e}  ({r['checked']} coords)"
             for name, r in report.items()]
    _emit({"seed": args.seed, "step": args.step, "gamma": args.gamma, "groups": report, "passed": not failed},
          args.json, "\n".join(lines))
    if failed:
        print(f"gradient check failed for group(s): {', '.join(failed)} (tolerance {GRADCHECK_TOL})",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ------------------------------------------------------------ inspect, eval


def inspect_summary(params, meta) -> dict:
    branches = meta.get("branches", [])
    names = meta.get("metapaths", [])
    if meta.get("fixed_beta") is not None:
        beta = np.asarray(meta["fixed_beta"], dtype=np.float64)
    else:
        beta = softmax_rows(params.beta_logits)
    if len(beta) != len(branches):
        raise ArgumentError("checkpoint branch list does not match beta length")
    per_order: dict[str, float] = {}
    rows = []
    for b, w in zip(branches, beta):
        label = "·".join(names[j] if j < len(names) else str(j) for j in b["subset"])
        per_order[str(b["order"])] = per_order.get(str(b["order"]), 0.0) + 100.0 * float(w)
        rows.append({"order": b["order"], "subset": label, "percent": 100.0 * float(w)})
    alphas = [softmax_rows(a).tolist() for a in params.alpha_logits]
    return {"order_percent": per_order, "branches": rows, "alpha": alphas}


def cmd_inspect(args) -> int:
    params, meta = load_checkpoint(args.checkpoint)
    s = inspect_summary(params, meta)
    lines = ["beta by order:"]
    lines += [f"  l={k}: {v:6.2f}%" for k, v in s["order_percent"].items()]
    lines.append("branches:")
    lines += [f"  l={r['order']} {r['subset']:30s} {r['percent']:6.2f}%" for r in s["branches"]]
    _emit(s, args.json, "\n".join(lines))
    return EXIT_OK


def cmd_eval(args) -> int:
    g = load_dataset(args.data)
    params, meta = load_checkpoint(args.checkpoint)
    scores = evaluate_checkpoint(g, params, meta)
    lines = [f"{k:5s} Macro-F1 {v['macro_f1']}  Micro-F1 {v['micro_f1']}" for k, v in scores.items()]
    _emit(scores, args.json, "\n".join(lines))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_train_flags(p):
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--config", help="JSON file with TrainConfig fields; flags override it")
    p.add_argument("--gamma", type=float)
    p.add_argument("--topk", type=int)
    p.add_argument("--metric", choices=["cosine", "gaussian"])
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--train-ratio", type=float)
    p.add_argument("--val-ratio", type=float)
    p.add_argument("--test-ratio", type=float)
    p.add_argument("--checkpoint", help="checkpoint path (default: <out>/checkpoint.json)")
    p.add_argument("--json", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multiorder", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    d = SynthConfig()
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--classes", type=int, default=d.n_classes)
    p.add_argument("--relations", default=",".join(d.relations),
                   help="comma-separated kinds: informative, noisy, cross")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--aux-size", type=int, default=d.aux_size)
    p.add_argument("--features", type=int, default=d.n_features)
    p.add_argument("--feature-noise", type=float, default=d.feature_noise)
    p.add_argument("--p-in", type=float, default=d.p_in)
    p.add_argument("--p-out", type=float, default=d.p_out)
    p.add_argument("--p-noise", type=float, default=d.p_noise)
    p.add_argument("--train-ratio", type=float)
    p.add_argument("--val-ratio", type=float)
    p.add_argument("--test-ratio", type=float)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the adaptive multi-order model")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="train W only on a frozen meta-path configuration")
    _add_train_flags(p)
    p.add_argument("--baseline", required=True, help="single:<j> or uniform")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="summarize learned branch weights")
    p.add_argument("checkpoint")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset's splits")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MultiOrderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
