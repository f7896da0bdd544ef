import csv
import json

import numpy as np
import pytest

from perftestgen import checkpoint
from perftestgen.cli import main
from perftestgen.config import ConfigError, config_from_dict, epoch_size, load_config
from perftestgen.devops import ExecutionHistory, save_with_history
from perftestgen.experiments import METRICS_HEADER, METRICS_SCHEMA, read_metrics

SMALL = """
seed = 0
dataset_size = 5000
max_steps = 60
eval_interval = 20
learning_rate = 1e-3
beta1 = 0.5

[active]
max_iterations = 2
steps_per_iteration = 10
candidates_per_iteration = 200
test_budget = 50
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def test_epoch_size():
    assert epoch_size(3_100_000) == 48_437
    assert epoch_size(500_000) == 7_812
    assert epoch_size(100_000) == 1_562


def test_config_defaults_and_limits():
    cfg = config_from_dict({})
    assert cfg.batch_size == 64 and cfg.accuracy_target == 0.96
    assert cfg.step_limit == 2 * 48_437
    assert len(cfg.simulator.clusters) == 20
    with pytest.raises(ConfigError):
        config_from_dict({"batch_size": 63})
    with pytest.raises(ConfigError):
        config_from_dict({"dataset_size": 3_100_001})
    with pytest.raises(ConfigError):
        config_from_dict({"nonsense": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"active": {"test_budget": 0}})
    with pytest.raises(ConfigError):
        config_from_dict({"driver": {"kind": "ftp"}})
    for bad in ({"learning_rate": 0}, {"gen_learning_rate": -1e-3}, {"beta1": 1.0}, {"beta2": -0.1}):
        with pytest.raises(ConfigError):
            config_from_dict(bad)


def test_optimizer_settings_reach_the_model():
    model = config_from_dict({"learning_rate": 4e-3, "gen_learning_rate": 1e-3, "beta1": 0.0}).new_model()
    assert model.disc_optimizer.learning_rate == 4e-3
    assert model.gen_optimizer.learning_rate == 1e-3 and model.gen_optimizer.beta1 == 0.0
    # zero means the generator shares the discriminator's rate
    model = config_from_dict({"learning_rate": 2e-3}).new_model()
    assert model.gen_optimizer.learning_rate == 2e-3


def test_config_clusters_and_http():
    cfg = config_from_dict({"simulator": {"clusters": [{"lows": [1, 1, 1, 1], "highs": [2, 2, 2, 2]}],
                                          "threshold": 2.0}})
    assert len(cfg.simulator.clusters) == 1 and cfg.simulator.threshold == 2.0
    cfg = config_from_dict({"simulator": {"remove_clusters": [0, 1]}})
    assert len(cfg.simulator.clusters) == 18
    cfg = config_from_dict({"driver": {"kind": "http", "base_url": "http://localhost:1/rubis"}})
    assert cfg.http.request_template[1] == "/ViewItem.php?itemId={IID}"
    with pytest.raises(ConfigError):
        config_from_dict({"driver": {"kind": "http", "base_url": "http://x", "requests": ["/{ZZ}"]}})


def test_bad_toml_is_a_config_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("seed = = 1")
    with pytest.raises(ConfigError):
        load_config(p)


def test_usage_errors(capsys, tmp_path):
    assert main(["train", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["fly"]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 1
    assert main(["generate"]) == 1
    (tmp_path / "bad.toml").write_text("batch_size = 3")
    assert main(["simulate", "--config", str(tmp_path / "bad.toml")]) == 1
    assert "usage" in capsys.readouterr().err


def test_simulate(tmp_path, cfg):
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    rows = list(csv.DictReader((tmp_path / "m" / "summary.csv").open()))
    assert rows[0]["points"] == "3100000" and rows[0]["positives"] == "300000"
    assert rows[0]["epoch_size"] == "78"
    assert len((tmp_path / "m" / "clusters.csv").read_text().splitlines()) == 21


def test_train_generate_update(tmp_path, cfg):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == METRICS_SCHEMA and lines[1] == ",".join(METRICS_HEADER)
    assert [r["step"] for r in read_metrics(out / "metrics.csv")] == ["20", "40", "60"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 60 and summary["epoch_size"] == 78
    ckpt = out / "model.ckpt"

    assert main(["generate", "--checkpoint", str(ckpt), "--requirement", "1", "--size", "100",
                 "--out", str(tmp_path / "suite")]) == 0
    rows = list(csv.DictReader((tmp_path / "suite" / "suite.csv").open()))
    assert len(rows) == 100 and list(rows[0]) == ["CID", "RID", "IID", "UID"]

    before = ckpt.read_bytes()
    assert main(["update", "--checkpoint", str(ckpt), "--config", str(cfg),
                 "--out", str(tmp_path / "upd")]) == 0
    assert ckpt.read_bytes() == before

    changed = tmp_path / "changed.toml"
    changed.write_text(SMALL.replace("[active]", "[simulator]\nremove_clusters = [0, 1]\n\n[active]"))
    # end the history with a test inside cluster 0 so the replay sees the change
    sim = load_config(cfg).simulator
    model, extra = checkpoint.load(ckpt, with_extra=True)
    hit = np.array(sim.clusters[0].lows, dtype=np.int64) - 1
    idx = np.vstack([extra["history/indices"].reshape(-1, 4).astype(np.int64), hit])
    save_with_history(model, ckpt, ExecutionHistory(idx, sim.labels(idx)))
    before = ckpt.read_bytes()
    assert main(["update", "--checkpoint", str(ckpt), "--config", str(changed),
                 "--out", str(tmp_path / "upd2")]) == 2
    assert ckpt.read_bytes() != before
    report = json.loads((tmp_path / "upd2" / "update.json").read_text())
    assert report["changed"] and report["differing"] >= 1 and report["steps"] > 0
    assert len(read_metrics(tmp_path / "upd2" / "update_metrics.csv")) == report["iterations"]


def test_baseline_and_compare(tmp_path, cfg):
    out = tmp_path / "b"
    assert main(["baseline", "--config", str(cfg), "--size", "500", "--out", str(out)]) == 0
    assert len((out / "baseline.csv").read_text().splitlines()) == 501
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 0
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "c"),
                 "--checkpoint", str(tmp_path / "p" / "model.ckpt"),
                 "--checkpoint", str(tmp_path / "p" / "model.ckpt"),
                 "--size", "100", "--size", "1000"]) == 0
    rows = list(csv.DictReader((tmp_path / "c" / "compare.csv").open()))
    assert [r["size"] for r in rows] == ["100", "1000"]
    assert float(rows[1]["random_expected"]) == pytest.approx(1000 * 300_000 / 3_100_000)
    assert rows[0]["pcgan_positive"] == rows[0]["acgan_positive"]
    assert main(["compare", "--config", str(cfg), "--checkpoint", str(tmp_path / "nope.ckpt")]) == 1


def test_train_active_is_byte_identical(tmp_path, cfg):
    for name in ("a", "b"):
        assert main(["train-active", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert len(a.splitlines()) == 4
    assert main(["train-active", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "metrics.csv").read_bytes() != a
