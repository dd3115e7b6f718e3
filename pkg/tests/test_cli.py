import json

import pytest

from multiorder.cli import main
from multiorder.graph import load_dataset

SYNTH = ["synth", "--n", "60", "--aux-size", "12", "--features", "3", "--seed", "7"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def dataset(tmp_path, capsys):
    d = tmp_path / "data"
    code, _, _ = run(capsys, *SYNTH, "--out", str(d))
    assert code == 0
    return d


def test_synth_writes_loadable_dataset(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--n", "300", "--classes", "3", "--relations", "informative,noisy,noisy",
                       "--seed", "7", "--out", str(tmp_path / "d"))
    assert code == 0
    summary = json.loads(out)
    assert summary["node_counts"]["target"] == 300
    assert sum(summary["class_balance"].values()) == 300
    g = load_dataset(tmp_path / "d")
    assert g.n_target == 300 and len(g.metapaths) == 3


def test_synth_is_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, *SYNTH, "--out", str(tmp_path / name))[0] == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_rejects_zero_classes(tmp_path, capsys):
    code, out, err = run(capsys, "synth", "--classes", "0", "--out", str(tmp_path / "d"))
    assert code == 1
    assert "classes" in err and out == ""


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "gradcheck", "--bogus")
    assert code == 1 and "bogus" in err


def test_train_eval_inspect(dataset, tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out, _ = run(capsys, "train", "--data", str(dataset), "--out", str(out_dir), "--epochs", "20",
                       "--topk", "5", "--json")
    assert code == 0
    summary = json.loads(out)
    record = json.loads((out_dir / "run.json").read_text())
    assert record["best_epoch"] == summary["best_epoch"]
    assert "test_macro_f1" in record and "test_micro_f1" in record
    assert (out_dir / "epochs.csv").read_text().count("\n") == 21

    code, out, _ = run(capsys, "eval", "--data", str(dataset), "--checkpoint", str(out_dir / "checkpoint.json"), "--json")
    assert code == 0
    scores = json.loads(out)
    assert scores["test"]["macro_f1"] == record["test_macro_f1"]
    assert scores["test"]["micro_f1"] == record["test_micro_f1"]

    code, out, _ = run(capsys, "inspect", str(out_dir / "checkpoint.json"), "--json")
    assert code == 0
    info = json.loads(out)
    assert abs(sum(info["order_percent"].values()) - 100.0) < 0.01
    assert len(info["branches"]) == 7


def test_train_gamma_zero(dataset, tmp_path, capsys):
    code, _, _ = run(capsys, "train", "--data", str(dataset), "--out", str(tmp_path / "r"), "--epochs", "3",
                     "--topk", "5", "--gamma", "0")
    assert code == 0
    record = json.loads((tmp_path / "r" / "run.json").read_text())
    assert record["config"]["gamma"] == 0.0
    assert all(e["loss"] == e["ce"] for e in record["epochs"])


def test_train_twice_identical(dataset, tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "train", "--data", str(dataset), "--out", str(tmp_path / name), "--epochs", "10",
                   "--topk", "5", "--seed", "0")[0] == 0
    assert (tmp_path / "a" / "run.json").read_bytes() == (tmp_path / "b" / "run.json").read_bytes()


def test_config_file_and_flag_override(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 4, "k": 5, "lr": 0.05}))
    code, _, _ = run(capsys, "train", "--data", str(dataset), "--out", str(tmp_path / "r"), "--config", str(cfg),
                     "--epochs", "2")
    assert code == 0
    record = json.loads((tmp_path / "r" / "run.json").read_text())
    assert len(record["epochs"]) == 2 and record["config"]["lr"] == 0.05


def test_baseline_subcommand(dataset, tmp_path, capsys):
    code, _, _ = run(capsys, "baseline", "--data", str(dataset), "--out", str(tmp_path / "b"), "--epochs", "5",
                     "--topk", "5", "--baseline", "uniform")
    assert code == 0
    code, out, _ = run(capsys, "inspect", str(tmp_path / "b" / "checkpoint.json"), "--json")
    info = json.loads(out)
    assert info["order_percent"]["1"] == pytest.approx(100.0)
    code, _, err = run(capsys, "baseline", "--data", str(dataset), "--out", str(tmp_path / "c"), "--epochs", "5",
                       "--topk", "5", "--baseline", "single:9")
    assert code == 1 and "9" in err


def test_bad_dataset_is_validation_error(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "r"))
    assert code == 2 and "manifest.json" in err


def test_corrupt_checkpoint(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text('{"format": ')
    code, out, err = run(capsys, "inspect", str(bad))
    assert code == 2 and "byte offset" in err and out == ""


def test_inspect_uniform_beta(tmp_path, capsys):
    import numpy as np

    from multiorder.metapath import enumerate_subsets
    from multiorder.model import init_params, save_checkpoint

    en = enumerate_subsets(3)
    path = save_checkpoint(tmp_path / "c.json", init_params(en, 2, 2, 0), en, ["a", "b", "c"])
    info = json.loads(run(capsys, "inspect", str(path), "--json")[1])
    assert info["order_percent"] == pytest.approx({"1": 300 / 7, "2": 300 / 7, "3": 100 / 7})
    p = init_params(en, 2, 2, 0)
    p.beta_logits = np.array([0, 0, 0, 0, 0, 0, 80.0])
    save_checkpoint(path, p, en, ["a", "b", "c"])
    info = json.loads(run(capsys, "inspect", str(path), "--json")[1])
    assert info["order_percent"]["3"] == pytest.approx(100.0)


def test_gradcheck_exit_codes(capsys):
    code, out, _ = run(capsys, "gradcheck", "--json")
    assert code == 0 and json.loads(out)["passed"]
    code, _, err = run(capsys, "gradcheck", "--step", "1e-1")
    if code != 0:
        assert code == 3 and "failed" in err
