"""End-to-end tests of the command-line interface.

Each stage runs in-process through ``main(argv)`` on micro-sized plans,
checking exit codes, the single-line error contract on stderr, and the
artifact handoff between stages.
"""

import argparse
import csv
import re
import textwrap

import numpy as np
import pytest

from treeval.cli import (
    _SCALE_SIZES,
    EXIT_ARTIFACT,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    RunConfig,
    main,
)
from treeval.ensemble import BoostConfig
from treeval.measure import CopulaMeasure

MICRO = """
experiment:
  name: micro
  seed: 0
payoff:
  kind: min_put
  strike: 1.0
model:
  d: 2
plan:
  n_train: 120
  n_valid: 60
  n_test: 150
  n_inner: 10
estimator:
  kind: tree
  nodesize: 30
"""


def _cfg(tmp_path, text=MICRO, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def _err_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1, err
    assert re.match(r"^(CONFIG_ERROR|MISSING_ARTIFACT|RUNTIME_ERROR): .+$", err[0])
    return err[0]


# ------------------------------------------------------------ config errors


def test_missing_config_file(tmp_path, capsys):
    rc = main(["simulate", "--config", str(tmp_path / "nope.yaml"),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    line = _err_line(capsys)
    assert line.startswith("CONFIG_ERROR:") and "not found" in line


def test_yaml_syntax_error_reports_position(tmp_path, capsys):
    cfg = _cfg(tmp_path, "payoff:\n  kind: min_put\n bad_indent: 1\n")
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "line" in _err_line(capsys)


def test_unknown_section(tmp_path, capsys):
    cfg = _cfg(tmp_path, MICRO + "\nextras:\n  a: 1\n")
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "unknown section 'extras'" in _err_line(capsys)


def test_unknown_key_reports_path(tmp_path, capsys):
    cfg = _cfg(tmp_path, MICRO.replace("n_train: 120", "n_trains: 120"))
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "'plan.n_trains'" in _err_line(capsys)


def test_wrong_type_reports_key_path(tmp_path, capsys):
    cfg = _cfg(tmp_path, MICRO.replace("n_train: 120", "n_train: many"))
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    line = _err_line(capsys)
    assert "plan.n_train" in line and "expected int" in line


def test_missing_payoff_section(tmp_path, capsys):
    cfg = _cfg(tmp_path, "experiment:\n  name: x\n")
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "payoff" in _err_line(capsys)


def test_bad_estimator_kind(tmp_path, capsys):
    cfg = _cfg(tmp_path, MICRO.replace("kind: tree", "kind: mlp"))
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "estimator.kind" in _err_line(capsys)


def test_missing_out_dir(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    rc = main(["simulate", "--config", cfg])
    assert rc == EXIT_CONFIG
    assert "output directory" in _err_line(capsys)


# ------------------------------------------------------- RunConfig resolution


def _ns(**kw):
    base = dict(seed=None, scale=None, out=None)
    base.update(kw)
    return argparse.Namespace(**base)


def test_scale_sizes_table():
    assert _SCALE_SIZES["desk"] == (5000, 2000, 20000, 200)
    assert _SCALE_SIZES["paper"] == (20000, 8000, 100000, 1000)


def test_plan_resolution_by_scale():
    doc = {"payoff": {"kind": "min_put"}}
    desk = RunConfig(doc, _ns()).european_plan()
    assert (desk.n_train, desk.valid_size, desk.n_test, desk.n_inner) == \
        (5000, 2000, 20000, 200)
    paper = RunConfig(doc, _ns(scale="paper")).european_plan()
    assert (paper.n_train, paper.valid_size, paper.n_test, paper.n_inner) == \
        (20000, 8000, 100000, 1000)


def test_seed_override_wins():
    doc = {"experiment": {"seed": 5}, "payoff": {"kind": "min_put"}}
    assert RunConfig(doc, _ns()).seed == 5
    assert RunConfig(doc, _ns(seed=3)).seed == 3


def test_default_estimator_is_boost():
    plan = RunConfig({"payoff": {"kind": "min_put"}}, _ns()).european_plan()
    name, config = plan.estimators[0]
    assert name == "boost"
    assert config == BoostConfig(rounds=400, learning_rate=0.1, nodesize=40,
                                 max_depth=15, patience=20, seed=7)


def test_clayton_measure_configuration():
    doc = {"payoff": {"kind": "min_put"}, "model": {"d": 2},
           "measure": {"kind": "clayton", "theta": 2.0}}
    plan = RunConfig(doc, _ns()).european_plan()
    assert isinstance(plan.measure, CopulaMeasure)
    from treeval.cli import ConfigError

    with pytest.raises(ConfigError, match="theta"):
        RunConfig({"payoff": {"kind": "min_put"},
                   "measure": {"kind": "clayton"}}, _ns()).european_plan()


# ------------------------------------------------------------- stage chain


def test_stage_chain(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    out = tmp_path / "run"

    # train before simulate: missing artifact
    rc = main(["train", "--config", cfg, "--out", str(out)])
    assert rc == EXIT_ARTIFACT
    assert _err_line(capsys).startswith("MISSING_ARTIFACT:")

    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    for name in ("samples.npz", "samples_meta.json", "config.snapshot"):
        assert (out / name).exists(), name
    with np.load(out / "samples.npz") as data:
        assert data["train_driver"].shape == (120, 2, 2)
        assert data["test_payoff"].shape == (150,)

    # value before train: missing artifact
    rc = main(["value", "--config", cfg, "--out", str(out)])
    assert rc == EXIT_ARTIFACT
    assert "flat_tree" in _err_line(capsys)

    assert main(["train", "--config", cfg, "--out", str(out)]) == EXIT_OK
    for name in ("flat_tree.npz", "flat_tree.txt", "training.json"):
        assert (out / name).exists(), name

    assert main(["value", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert (out / "value_surface_tree.csv").exists()
    assert (out / "value_surface_tree.meta.json").exists()

    assert main(["risk", "--config", cfg, "--out", str(out)]) == EXIT_OK
    for name in ("risk.csv", "qq_t1.csv", "qq_tT.csv"):
        assert (out / name).exists(), name
    capsys.readouterr()

    # re-value at dates {0, T} only; risk then lacks date 1
    assert main(["value", "--config", cfg, "--out", str(out),
                 "--t", "0", "T"]) == EXIT_OK
    rc = main(["risk", "--config", cfg, "--out", str(out)])
    assert rc == EXIT_ARTIFACT
    assert "date 1" in _err_line(capsys)


def test_corrupt_artifact_is_runtime_error(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    np.savez_compressed(out / "samples.npz", wrong_key=np.zeros(3))
    capsys.readouterr()
    rc = main(["train", "--config", cfg, "--out", str(out)])
    assert rc == EXIT_RUNTIME
    assert _err_line(capsys).startswith("RUNTIME_ERROR:")


# ----------------------------------------------------------------- bermudan


BERM = """
experiment:
  name: micro_berm
  seed: 1
bermudan:
  n_dates: 3
  n_train: 200
  n_test: 300
  estimator:
    kind: tree
    nodesize: 50
"""


def test_bermudan_command(tmp_path, capsys):
    cfg = _cfg(tmp_path, BERM)
    out = tmp_path / "b"
    assert main(["bermudan", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert "stopping mass" in capsys.readouterr().out
    with open(out / "stopping.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    total = sum(float(r["probability"]) for r in rows)
    assert total == pytest.approx(1.0, abs=1e-12)


# ------------------------------------------------------------ report bundle


def test_report_bundle_determinism(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    hashes = []
    for sub in ("r1", "r2"):
        out = tmp_path / sub
        assert main(["report", "--config", cfg, "--out", str(out)]) == EXIT_OK
        hashes.append((out / "bundle.hash").read_text().strip())
    assert hashes[0] == hashes[1]

    out3 = tmp_path / "r3"
    assert main(["report", "--config", cfg, "--out", str(out3),
                 "--seed", "1"]) == EXIT_OK
    assert (out3 / "bundle.hash").read_text().strip() != hashes[0]

    # the stored digest matches an independent recomputation
    from treeval.bench import bundle_hash

    assert bundle_hash(tmp_path / "r1") == hashes[0]
    capsys.readouterr()
