import numpy as np
import pytest

import oracles
from multiorder.errors import ArgumentError, ContractError
from multiorder.metapath import build_first_order_set, enumerate_subsets
from multiorder.model import Gradients, ModelParams, backward, forward, init_params, total_loss
from multiorder.semantic import build_semantic_adjacency
from multiorder.synth import SynthConfig, generate_synthetic
from multiorder.train import (
    AdamState,
    TrainConfig,
    adam_step,
    baseline_beta,
    evaluate,
    evaluate_checkpoint,
    f1_scores,
    parse_baseline,
    run_fixed_metapath_baseline,
    train,
)

SMALL = SynthConfig(n=60, aux_size=12, p_in=0.3, p_out=0.02, n_features=3, feature_noise=1.5)


def scalar_params(x):
    return ModelParams([], np.zeros(0), np.array([[x]]))


def test_adam_first_step_is_lr():
    p = scalar_params(0.5)
    state = AdamState.for_params(p)
    _, new = adam_step(state, p, Gradients(np.array([[1.0]]), np.zeros(0), []), 0.01)
    assert 0.5 - new.W[0, 0] == pytest.approx(0.01 / (1 + 1e-8), rel=1e-12)


def test_adam_zero_gradient_keeps_params():
    p = init_params(enumerate_subsets(2), 3, 2, 0)
    state = AdamState.for_params(p)
    zeros = Gradients(np.zeros_like(p.W), np.zeros_like(p.beta_logits), [np.zeros_like(a) for a in p.alpha_logits])
    for _ in range(3):
        state, p2 = adam_step(state, p, zeros, 0.01)
        assert p2.same_as(p)


def test_adam_shape_mismatch():
    p = scalar_params(0.0)
    with pytest.raises(ContractError):
        adam_step(AdamState.for_params(p), p, Gradients(np.zeros((2, 1)), np.zeros(0), []), 0.01)


def test_f1_examples():
    assert f1_scores([0, 1, 2], [0, 1, 2], 3) == (1.0, 1.0)
    macro, micro = f1_scores([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert micro == 0.75
    assert macro == pytest.approx((2 / 3 + 0.8) / 2, abs=1e-15)
    _, micro = f1_scores([0, 1, 2] * 3, [0] * 9, 3)
    assert micro == pytest.approx(1 / 3)
    with pytest.raises(ArgumentError):
        f1_scores([], [], 2)


def test_f1_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        y, p = rng.integers(0, 4, 30), rng.integers(0, 4, 30)
        assert f1_scores(y, p, 4) == pytest.approx(oracles.f1(y, p, 4), abs=1e-15)


def test_train_config_validation():
    with pytest.raises(ArgumentError):
        TrainConfig(lr=0).validate()
    with pytest.raises(ArgumentError):
        TrainConfig(epochs=0).validate()
    with pytest.raises(ArgumentError):
        TrainConfig(k=50).validate(n=50)
    with pytest.raises(ArgumentError):
        TrainConfig.from_dict({"learning_rate": 0.1})
    cfg = TrainConfig(split_ratios=(0.2, 0.1, 0.1))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_single_epoch():
    g = generate_synthetic(SMALL, 0)
    rec = train(g, None, TrainConfig(epochs=1, k=5))
    assert len(rec.epochs) == 1 and rec.best_epoch == 0


def test_train_is_deterministic():
    g = generate_synthetic(SMALL, 1)
    cfg = TrainConfig(epochs=15, k=5, seed=3)
    a, b = train(g, None, cfg), train(g, None, cfg)
    assert a.to_json() == b.to_json()
    assert a.params.same_as(b.params)


def test_record_contents_and_loss_sanity():
    g = generate_synthetic(SMALL, 2)
    rec = train(g, None, TrainConfig(epochs=40, k=5))
    vals = [e["val_micro"] for e in rec.epochs]
    assert vals[rec.best_epoch] == max(vals)
    assert rec.epochs[rec.best_epoch]["loss"] <= rec.epochs[0]["loss"]
    assert sum(rec.beta) == pytest.approx(1.0, abs=1e-12)
    assert len(rec.branches) == 7
    assert rec.epochs_csv().splitlines()[0] == "epoch,loss,ce,rec,train_macro,train_micro,val_macro,val_micro"


def test_gamma_zero_is_ce_only():
    g = generate_synthetic(SMALL, 3)
    rec = train(g, None, TrainConfig(epochs=5, k=5, gamma=0.0))
    assert all(e["loss"] == e["ce"] for e in rec.epochs)


def test_test_metrics_come_from_best_epoch():
    # few, very noisy features and a large step size: validation accuracy peaks early, then decays
    cfg = SynthConfig(n=120, aux_size=20, p_in=0.15, p_out=0.05, n_features=40, feature_noise=4.0,
                      split_ratios=(0.1, 0.2, 0.2))
    g = generate_synthetic(cfg, 0)
    rec = train(g, None, TrainConfig(epochs=150, k=5, lr=0.1))
    last = len(rec.epochs) - 1
    assert rec.best_epoch < last
    assert rec.epochs[last]["val_micro"] < rec.epochs[rec.best_epoch]["val_micro"]
    scores = evaluate_checkpoint(g, rec.params, {"specs": [s.to_json() for s in g.metapaths], "config": rec.config})
    assert scores["test"]["macro_f1"] == rec.test_macro_f1
    assert scores["val"]["micro_f1"] == rec.val_micro_f1


def test_descent_over_first_steps():
    violations = []
    for seed in range(5):
        g = generate_synthetic(SynthConfig(), seed)
        first = build_first_order_set(g, g.metapaths)
        en = enumerate_subsets(first.L)
        sem = build_semantic_adjacency(g.features, 50)
        params = init_params(en, g.features.shape[1], g.num_classes, seed)
        state = AdamState.for_params(params)
        losses = []
        for _ in range(11):
            cache = forward(params, g, first, en)
            losses.append(total_loss(cache, g.labels, g.splits.train, sem, 0.1))
            grads = backward(cache, params, g.labels, g.splits.train, sem, 0.1)
            state, params = adam_step(state, params, grads, 0.01)
        violations.append(int(np.sum(np.diff(losses) > 0)))
    assert np.mean(violations) <= 1


def test_baseline_parsing():
    assert parse_baseline("single:2", 3) == ("single", 2)
    assert parse_baseline(1, 3) == ("single", 1)
    assert parse_baseline("uniform", 3) == ("uniform", None)
    for bad in ["single:3", "single:x", "mean", -1]:
        with pytest.raises(ArgumentError):
            parse_baseline(bad, 3)
    en = enumerate_subsets(3)
    np.testing.assert_array_equal(baseline_beta(en, "single:1"), [0, 1, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(baseline_beta(en, "uniform"), [1 / 3] * 3 + [0] * 4)


def test_baseline_learns_only_w():
    g = generate_synthetic(SMALL, 4)
    rec = run_fixed_metapath_baseline(g, None, TrainConfig(epochs=10, k=5), "single:0")
    init = init_params(enumerate_subsets(3), 3, 3, 0)
    assert all(np.array_equal(a, b) for a, b in zip(rec.params.alpha_logits, init.alpha_logits))
    assert np.array_equal(rec.params.beta_logits, init.beta_logits)
    assert not np.array_equal(rec.params.W, init.W)
    assert rec.beta == [1.0, 0, 0, 0, 0, 0, 0]
    with pytest.raises(ArgumentError):
        run_fixed_metapath_baseline(g, None, TrainConfig(epochs=1, k=5), "single:5")


def test_evaluate_requires_indices():
    g = generate_synthetic(SMALL, 5)
    first = build_first_order_set(g, g.metapaths)
    en = enumerate_subsets(first.L)
    cache = forward(init_params(en, 3, 3, 0), g, first, en)
    with pytest.raises(ArgumentError):
        evaluate(cache, g.labels, [])
