"""End-to-end command-line behavior: data generation, training runs, sweeps.

Commands are invoked in-process through main(argv) so the suite stays fast;
one smoke test goes through the installed console script.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from refplay.cli import main, validate_config
from refplay.data import load_dataset
from refplay.errors import ConfigError

XML = """<concepts>
  <concept name="pelican" category="bird">
    <attribute>has wings</attribute><attribute>flies</attribute>
    <attribute>has a pouch</attribute>
  </concept>
  <concept name="sparrow" category="bird">
    <attribute>has wings</attribute><attribute>flies</attribute>
    <attribute>is small</attribute>
  </concept>
  <concept name="hammer" category="tool">
    <attribute>has a handle</attribute><attribute>is heavy</attribute>
  </concept>
  <concept name="fork" category="tool">
    <attribute>has a handle</attribute><attribute>has tines</attribute>
  </concept>
</concepts>
"""


def _tiny_config(tmp_path, **overrides):
    cfg = {
        "dataset": {"family": "shapes", "seed": 1},
        "arch": "lstm",
        "regime": "emergent",
        "max_epochs": 2,
        "batch_size": 512,
        "n_resamples": 2,
        "dialogs": 2,
        "seed": 1,
        "out": str(tmp_path / "run"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path, cfg


# -- gen-data -----------------------------------------------------------------


def test_gen_data_shapes(tmp_path, capsys):
    out = tmp_path / "shapes.tsv"
    assert main(["gen-data", "shapes", "--seed", "3", "--out", str(out)]) == 0
    assert "1000 items" in capsys.readouterr().out
    ds = load_dataset(out)
    assert ds.family == "shapes" and len(ds.ids) == 1000 and ds.seed == 3


def test_gen_data_concepts_needs_xml(capsys):
    assert main(["gen-data", "concepts"]) == 1
    assert "--xml" in capsys.readouterr().err


def test_gen_data_concepts_missing_file(tmp_path, capsys):
    assert main(["gen-data", "concepts", "--xml", str(tmp_path / "nope.xml")]) == 1
    assert "error" in capsys.readouterr().err


def test_gen_data_concepts_from_xml(tmp_path):
    xml = tmp_path / "corpus.xml"
    xml.write_text(XML, encoding="utf-8")
    out = tmp_path / "concepts.tsv"
    assert main(["gen-data", "concepts", "--xml", str(xml), "--out", str(out)]) == 0
    ds = load_dataset(out)
    assert ds.family == "concepts" and len(ds.ids) == 4
    assert ds.n_categories == 2


def test_gen_data_synth(tmp_path):
    out = tmp_path / "synth.tsv"
    assert main(["gen-data", "concepts-synth", "--seed", "1", "--items", "50",
                 "--categories", "5", "--out", str(out)]) == 0
    ds = load_dataset(out)
    assert len(ds.ids) == 50 and ds.n_categories == 5


def test_out_root_redirects_relative_paths(tmp_path, monkeypatch):
    monkeypatch.setenv("REFPLAY_OUT", str(tmp_path))
    assert main(["gen-data", "shapes", "--out", "nested/ds.tsv"]) == 0
    assert (tmp_path / "nested" / "ds.tsv").exists()


def test_usage_error_exits_one():
    with pytest.raises(SystemExit) as exc:
        main(["train"])  # --config is required
    assert exc.value.code == 1


# -- config validation ----------------------------------------------------------


def test_validate_config_fills_defaults():
    cfg = validate_config({"dataset": "x.tsv"})
    assert cfg["arch"] == "transformer" and cfg["regime"] == "emergent"
    assert cfg["selfplay"] is True and cfg["teacher"] is False
    assert cfg["batch_size"] == 64 and cfg["lr"] == 1e-3


def test_validate_config_reports_every_problem():
    with pytest.raises(ConfigError) as exc:
        validate_config({"dataset": "x.tsv", "regime": "psychic",
                         "beta": -1, "typo_key": 3, "batch_size": 0})
    msg = str(exc.value)
    for frag in ("regime", "beta", "typo_key", "batch_size"):
        assert frag in msg


def test_validate_config_role_and_m_rules():
    with pytest.raises(ConfigError, match="role"):
        validate_config({"dataset": "x.tsv", "regime": "oracle"})
    with pytest.raises(ConfigError, match="'M'"):
        validate_config({"dataset": "x.tsv", "regime": "limited",
                         "role": "listener"})
    with pytest.raises(ConfigError, match="'M'"):
        validate_config({"dataset": "x.tsv", "regime": "emergent", "M": 10})
    cfg = validate_config({"dataset": "x.tsv", "regime": "limited",
                           "role": "speaker", "M": 50, "N": None})
    assert cfg["M"] == 50 and cfg["N"] is None


def test_train_rejects_bad_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["train", "--config", str(bad)]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1


def test_train_rejects_invalid_config_file(tmp_path, capsys):
    path, _ = _tiny_config(tmp_path, regime="nonsense")
    assert main(["train", "--config", str(path)]) == 1
    assert "regime" in capsys.readouterr().err


# -- training runs ----------------------------------------------------------------


def test_train_emergent_writes_all_artifacts(tmp_path, capsys):
    path, cfg = _tiny_config(tmp_path)
    assert main(["train", "--config", str(path)]) == 0
    out = tmp_path / "run"
    expected = [
        "agent_a.ckpt", "agent_b.ckpt", "config.json", "log.tsv",
        "metrics.tsv", "summary.kv", "dialogs.txt", "curves.png",
        "lexicon_target.csv", "lexicon_target.png", "lexicon_novel.csv",
        "lexicon_novel.png", "correlation.csv", "correlation.png",
    ]
    for name in expected:
        assert (out / name).exists(), name
    assert "run complete" in capsys.readouterr().out
    metrics = (out / "metrics.tsv").read_text().splitlines()
    assert metrics[0].startswith("#split\tpairing")
    assert len(metrics) == 5  # dev/test x target/novel
    summary = dict(l.split("\t") for l in (out / "summary.kv").read_text().splitlines())
    assert summary["regime"] == "emergent"
    assert 0.0 <= float(summary["acc_test_target"]) <= 100.0


def test_train_metrics_reproducible(tmp_path):
    path1, _ = _tiny_config(tmp_path, out=str(tmp_path / "r1"))
    assert main(["train", "--config", str(path1)]) == 0
    cfg2 = tmp_path / "c2.json"
    cfg2.write_text(json.dumps(json.loads(path1.read_text()) | {"out": str(tmp_path / "r2")}),
                    encoding="utf-8")
    assert main(["train", "--config", str(cfg2)]) == 0
    for name in ("metrics.tsv", "log.tsv", "summary.kv", "lexicon_target.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == \
            (tmp_path / "r2" / name).read_bytes(), name


def test_train_seed_override_changes_run(tmp_path):
    path, _ = _tiny_config(tmp_path, out=str(tmp_path / "r1"))
    assert main(["train", "--config", str(path), "--seed", "9",
                 "--out", str(tmp_path / "r9")]) == 0
    cfg = json.loads((tmp_path / "r9" / "config.json").read_text())
    assert cfg["seed"] == 9


def test_train_oracle_role_run(tmp_path):
    path, _ = _tiny_config(tmp_path, regime="oracle", role="listener",
                           selfplay=False, out=str(tmp_path / "ro"))
    assert main(["train", "--config", str(path)]) == 0
    assert (tmp_path / "ro" / "agent.ckpt").exists()
    lines = (tmp_path / "ro" / "metrics.tsv").read_text().splitlines()
    assert len(lines) == 5


def test_train_limited_run(tmp_path):
    path, _ = _tiny_config(tmp_path, regime="limited", role="listener", M=16,
                           N=1, teacher=True, max_epochs=3,
                           out=str(tmp_path / "rl"))
    assert main(["train", "--config", str(path)]) == 0
    summary = dict(l.split("\t") for l in
                   (tmp_path / "rl" / "summary.kv").read_text().splitlines())
    assert summary["regime"] == "limited-listener"


# -- sweep --------------------------------------------------------------------------


def test_sweep_ranks_trials(tmp_path):
    base = {
        "dataset": {"family": "shapes", "seed": 1},
        "arch": "lstm", "regime": "emergent", "max_epochs": 1,
        "batch_size": 512, "n_resamples": 1, "dialogs": 0, "seed": 1,
    }
    spec = {"base": base, "space": {"lr": [0.001, 0.0001]}, "n_samples": 2,
            "sweep_seed": 0, "out": str(tmp_path / "sweep")}
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps(spec), encoding="utf-8")
    assert main(["sweep", "--config", str(cfg)]) == 0
    out = tmp_path / "sweep"
    ranking = (out / "ranking.tsv").read_text().splitlines()
    assert ranking[0] == "#rank\tscore\tconfig"
    assert len(ranking) == 3
    scores = [float(l.split("\t")[1]) for l in ranking[1:]]
    assert scores == sorted(scores, reverse=True)
    best = json.loads((out / "best_config.json").read_text())
    assert best["lr"] in (0.001, 0.0001)
    assert (out / "trial-00" / "metrics.tsv").exists()
    assert (out / "trial-01" / "metrics.tsv").exists()


def test_sweep_requires_base_and_space(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"base": {}}), encoding="utf-8")
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_console_script_usable():
    proc = subprocess.run(["refplay", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout and "sweep" in proc.stdout
