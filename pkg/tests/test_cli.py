import json

import pandas as pd
import pytest
import yaml

from amltriage.cli import main
from amltriage.config import RunConfig

SMALL_SYNTH = {"n_accounts": 1200, "n_days": 60, "n_rings": 6, "ring_span_days": 20, "ring_activity_days": 6, "background_rate": 0.08}


def write_config(tmp_path, **sections):
    doc = {"synth": SMALL_SYNTH, "train": {"n_trials": 3, "gbdt_rounds": 15},
           "walk": {"num_walks": 20}, **sections}
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def run(*args):
    return main([str(a) for a in args])


def test_synth_deterministic_and_fp_share(tmp_path):
    cfg = write_config(tmp_path)
    assert run("synth", "--config", cfg, "--seed", 7, "--out", tmp_path / "a") == 0
    assert run("synth", "--config", cfg, "--seed", 7, "--out", tmp_path / "b") == 0
    a = (tmp_path / "a" / "transactions.csv").read_bytes()
    assert a == (tmp_path / "b" / "transactions.csv").read_bytes()
    df = pd.read_csv(tmp_path / "a" / "transactions.csv")
    assert abs((df["label"] == 0).mean() - 0.97) <= 0.02
    resolved = yaml.safe_load((tmp_path / "a" / "resolved_synth.yaml").read_text())
    assert resolved["seed"] == 7 and "amount_threshold" in resolved["resolved"]["rules"]


def test_invalid_key_is_usage_error(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("synth:\n  n_acounts: 5\n")
    assert run("synth", "--config", p, "--out", tmp_path) == 1
    assert "synth.n_acounts" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert run("explode") == 1
    assert run("synth", "--seed", -1) == 1
    assert run("--help") == 0


def test_missing_input_is_data_error(tmp_path, capsys):
    assert run("featurize", "--out", tmp_path / "nothing") == 2
    assert "run `synth` first" in capsys.readouterr().err


def test_bad_csv_is_data_error(tmp_path, capsys):
    bad = tmp_path / "t.csv"
    bad.write_text("txn_id,timestamp,sender_id,receiver_id,amount,sender_type,receiver_type,label\n"
                   "t1,2024-01-01T00:00:00Z,A,B,-1,internal,internal,0\n")
    cfg = write_config(tmp_path, paths={"input": str(bad), "out": str(tmp_path / "o")})
    assert run("featurize", "--config", cfg) == 2
    assert "line 2" in capsys.readouterr().err


def test_gw_and_gwd_exclusive(tmp_path):
    cfg = write_config(tmp_path, features={"gw": True, "gwd": True})
    assert run("synth", "--config", cfg, "--out", tmp_path) == 1


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = write_config(d)
    assert run("synth", "--config", cfg, "--out", d) == 0
    return d, cfg


def test_profiles_only_toggle(synth_dir, tmp_path):
    d, _ = synth_dir
    cfg = write_config(tmp_path, paths={"input": str(d / "transactions.csv"), "out": str(tmp_path)},
                       features={"degrees": False, "weighted_degrees": False, "gw": False})
    assert run("featurize", "--config", cfg) == 0
    cols = pd.read_csv(tmp_path / "features.csv", nrows=1).columns
    assert not any(c.startswith(("deg_", "gw_", "gwd_")) for c in cols)
    assert any(c.startswith("prof_") for c in cols)


def test_gwd_featurize_records_threshold(synth_dir, tmp_path):
    d, _ = synth_dir
    cfg = write_config(tmp_path, paths={"input": str(d / "transactions.csv"), "out": str(tmp_path)},
                       features={"gw": False, "gwd": True}, window={"twl_days": 1, "tws_days": 30, "label_delay_days": 1},
                       gwd={"threshold": 0.25})
    assert run("featurize", "--config", cfg) == 0
    cols = pd.read_csv(tmp_path / "features.csv", nrows=1).columns
    assert any(c.startswith("gwd_") for c in cols) and any(c.startswith("deg_") for c in cols)
    resolved = yaml.safe_load((tmp_path / "resolved_featurize.yaml").read_text())
    assert resolved["gwd"]["threshold"] == 0.25 and resolved["resolved"]["gwd_threshold"] == 0.25
    assert resolved["window"] == {"twl_days": 1, "tws_days": 30, "label_delay_days": 1}


def test_end_to_end_twice_identical(synth_dir, tmp_path):
    d, cfg = synth_dir
    reports = []
    out = tmp_path / "run"
    for _ in range(2):
        base = ["--config", cfg, "--out", out]
        assert run("synth", *base) == 0
        assert run("featurize", *base) == 0
        assert run("train", *base) == 0
        assert run("evaluate", *base, "--fpr", 0.2) == 0
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1]
    board = pd.read_csv(out / "leaderboard.csv")
    assert len(board) == 3 and list(board.columns) == ["trial", "algorithm", "params", "val_recall_at_20fpr"]
    rep = json.loads(reports[0])
    assert any(k.endswith("test/recall_at_0.2fpr") for k in rep["metrics"])


def test_resolved_config_complete():
    cfg = RunConfig.from_dict({})
    for section in ("synth", "features", "window", "walk", "gwd", "train", "evaluate", "sweep", "experiment_model"):
        assert section in cfg.data
    assert cfg.data["synth"]["target_alert_fp_rate"] == 0.97
