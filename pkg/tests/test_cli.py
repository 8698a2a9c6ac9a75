import csv
import json

import pytest

import dsfgan.cli as cli
import dsfgan.harness as harness
from dsfgan.cli import main
from dsfgan.exceptions import NonFiniteError

from toydata import mixed_frame

SMALL_NET = {"noise_dim": 8, "generator_dims": [16], "critic_dims": [16]}


@pytest.fixture
def workspace(tmp_path):
    frame, config = mixed_frame()
    data = tmp_path / "toy.csv"
    frame.to_csv(data, index=False)
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps(config.to_dict()))
    out = tmp_path / "out"
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"dataset": "toy.csv", "schema_config": "schema.json", "out": str(out),
                               "batch_size": 50, "gan": SMALL_NET}))
    return tmp_path, cfg, out


def _trace(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_prepare_writes_schema(workspace, capsys):
    _, cfg, out = workspace
    assert main(["prepare", "--config", str(cfg)]) == 0
    doc = json.loads((out / "schema.json").read_text())
    assert doc["format_version"] == 1
    assert doc["provenance"]["n_rows"] == 500
    assert "dropped: 0" in capsys.readouterr().out


def test_prepare_missing_column_is_config_error(workspace, capsys):
    tmp, cfg, _ = workspace
    bad = json.loads((tmp / "schema.json").read_text())
    bad["columns"]["height"] = "continuous"
    (tmp / "schema.json").write_text(json.dumps(bad))
    assert main(["prepare", "--config", str(cfg)]) == 2
    assert "height" in capsys.readouterr().err


def test_prepare_header_only_is_data_error(workspace):
    tmp, cfg, _ = workspace
    (tmp / "toy.csv").write_text("x,color,label\n")
    assert main(["prepare", "--config", str(cfg)]) == 3


def test_unknown_config_key(workspace):
    tmp, cfg, _ = workspace
    doc = json.loads(cfg.read_text())
    doc["epochz"] = 3
    cfg.write_text(json.dumps(doc))
    assert main(["prepare", "--config", str(cfg)]) == 2


def test_train_base_has_zero_feedback_loss(workspace):
    _, cfg, out = workspace
    main(["prepare", "--config", str(cfg)])
    assert main(["train", "--config", str(cfg), "--variant", "base", "--epochs", "4"]) == 0
    rows = _trace(out / "loss_trace_base.csv")
    assert list(rows[0]) == ["epoch", "critic_loss", "gen_loss", "H", "L_f"]
    assert [float(r["L_f"]) for r in rows] == [0.0] * 4
    model = json.loads((out / "model_base.json").read_text())
    assert model["extra"]["effective_config"]["epochs"] == 4


def test_train_feedback_schedule(workspace):
    _, cfg, out = workspace
    main(["prepare", "--config", str(cfg)])
    assert main(["train", "--config", str(cfg), "--variant", "feedback", "--epochs", "10"]) == 0
    lf = [float(r["L_f"]) for r in _trace(out / "loss_trace_feedback.csv")]
    assert lf[:5] == [0.0] * 5
    assert all(v != 0.0 for v in lf[5:])


def test_train_without_prepare(workspace):
    _, cfg, _ = workspace
    assert main(["train", "--config", str(cfg)]) == 2


def test_adult_preset_defaults(workspace, monkeypatch):
    _, cfg, out = workspace
    seen = {}

    def fake_train(c):
        seen.update(c)
        return 0

    monkeypatch.setattr(cli, "cmd_train", fake_train)
    doc = json.loads(cfg.read_text())
    del doc["batch_size"]
    cfg.write_text(json.dumps(doc))
    assert main(["train", "--config", str(cfg), "--preset", "adult"]) == 0
    assert (seen["epochs"], seen["batch_size"], seen["lambda"]) == (100, 500, 1.0)


def test_flags_override_config(workspace, monkeypatch):
    _, cfg, _ = workspace
    seen = {}
    monkeypatch.setattr(cli, "cmd_train", lambda c: seen.update(c) or 0)
    main(["train", "--config", str(cfg), "--preset", "house", "--epochs", "7", "--lambda", "0.5"])
    assert (seen["epochs"], seen["batch_size"], seen["lambda"]) == (7, 50, 0.5)


def test_negative_lambda_rejected(workspace):
    _, cfg, _ = workspace
    assert main(["train", "--config", str(cfg), "--lambda", "-1"]) == 2


@pytest.fixture
def trained(workspace):
    _, cfg, out = workspace
    main(["prepare", "--config", str(cfg)])
    main(["train", "--config", str(cfg), "--variant", "base", "--epochs", "2"])
    return out / "model_base.json"


def test_sample_count_and_header(trained, tmp_path):
    dest = tmp_path / "s.csv"
    assert main(["sample", str(trained), "-n", "100", "--out", str(dest)]) == 0
    lines = dest.read_text().splitlines()
    assert lines[0] == "x,color,label"
    assert len(lines) == 101


def test_sample_is_deterministic(trained, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["sample", str(trained), "-n", "50", "--seed", "4", "--out", str(a)])
    main(["sample", str(trained), "-n", "50", "--seed", "4", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_sample_zero_rows(trained):
    assert main(["sample", str(trained), "-n", "0"]) == 2


def test_sample_malformed_model(tmp_path):
    bad = tmp_path / "model.json"
    bad.write_text('{"format_version": 1, "schema": {}}')
    assert main(["sample", str(bad), "-n", "5"]) == 2
    bad.write_text("not json")
    assert main(["sample", str(bad), "-n", "5"]) == 2


def test_experiment_report(workspace, capsys):
    _, cfg, out = workspace
    args = ["experiment", "--config", str(cfg), "--folds", "2", "--reps", "2", "--epochs", "6"]
    assert main(args) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["folds"]) == 2
    assert all(set(f["variants"]) == {"base", "feedback"} for f in report["folds"])
    assert report["effective_config"]["variant"] == "paired"
    text = (out / "report.txt").read_text()
    assert "±" in text
    first = (out / "report.json").read_bytes()
    assert main(args + ["--jobs", "2"]) == 0
    assert (out / "report.json").read_bytes() == first


def test_experiment_fold_failure_exit_code(workspace, monkeypatch):
    _, cfg, _ = workspace

    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(harness, "efficacy_eval", boom)
    assert main(["experiment", "--config", str(cfg), "--folds", "2", "--reps", "1", "--epochs", "2"]) == 5


def test_numeric_abort_exit_code(workspace, monkeypatch):
    _, cfg, _ = workspace

    def bad(c):
        raise NonFiniteError("training aborted at epoch 1: nan in log")

    monkeypatch.setattr(cli, "cmd_train", bad)
    assert main(["train", "--config", str(cfg)]) == 4
