"""Command-line front end: config parsing, subcommands, report emission.

Subcommands: simulate, train, value, risk, bermudan, report.  Every
command takes ``--config PATH`` (YAML) plus optional ``--seed``,
``--scale {desk,paper}``, ``--threads``, ``--out DIR`` overrides.  Exit
codes: 0 success, 2 config error, 3 missing upstream artifact, 4
runtime failure; errors print one machine-parsable line
``<ERROR_CLASS>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import bench
from .bench import (BermudanPlan, ExperimentPlan, bundle_hash, oracle_v1,
                    run_bermudan, run_experiment, write_snapshot)
from .cart import TreeConfig
from .ensemble import BoostConfig, ForestConfig
from .flat import load_flat, save_flat, write_flat_text
from .measure import CopulaMeasure, ProductMeasure
from .parallel import set_threads
from .paths import (STREAM_TEST, STREAM_TRAIN, STREAM_VALID,
                    BlackScholesModel, Payoff, payoff_value, sample_driver,
                    simulate_bs)
from .risk import detrended_qq, risk_report
from .valuation import value_surface

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ARTIFACT = 3
EXIT_RUNTIME = 4

_SCALES = ("desk", "paper")
# plan-size defaults per scale: (n_train, n_valid, n_test, n_inner)
_SCALE_SIZES = {"desk": (5000, 2000, 20000, 200),
                "paper": (20000, 8000, 100000, 1000)}


class ConfigError(Exception):
    pass


class ArtifactError(Exception):
    pass


# ------------------------------------------------------------ config schema


def _type_name(v) -> str:
    return type(v).__name__


def _section(doc: dict, name: str, allowed: set, required: bool = False) -> dict:
    node = doc.get(name)
    if node is None:
        if required:
            raise ConfigError(f"missing required section '{name}'")
        return {}
    if not isinstance(node, dict):
        raise ConfigError(f"section '{name}' must be a mapping, got {_type_name(node)}")
    for key in node:
        if key not in allowed:
            raise ConfigError(f"unknown key '{name}.{key}' "
                              f"(allowed: {', '.join(sorted(allowed))})")
    return node


def _get(node: dict, path: str, key: str, kind, default=None, enum=None):
    if key not in node:
        return default
    val = node[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind is int:
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {_type_name(val)}")
    if enum is not None and val not in enum:
        raise ConfigError(f"{path}.{key}: unknown value {val!r} "
                          f"(expected one of: {', '.join(map(str, sorted(enum)))})")
    return val


def _build_payoff(doc: dict) -> Payoff:
    node = _section(doc, "payoff", {"kind", "strike", "barrier", "coupon", "face"},
                    required=True)
    kind = _get(node, "payoff", "kind", str, enum={"min_put", "max_call", "brc"})
    if kind is None:
        raise ConfigError("payoff.kind is required")
    try:
        return Payoff(kind=kind, strike=_get(node, "payoff", "strike", float, 1.0),
                      barrier=_get(node, "payoff", "barrier", float, 0.6),
                      coupon=_get(node, "payoff", "coupon", float, 0.0),
                      face=_get(node, "payoff", "face", float, 1.0))
    except ValueError as e:
        raise ConfigError(f"payoff: {e}") from None


def _build_model(doc: dict, payoff_kind: str) -> BlackScholesModel:
    node = _section(doc, "model", {"kind", "d", "rate", "vol", "initial_price", "steps"})
    _get(node, "model", "kind", str, "black_scholes", enum={"black_scholes"})
    d = _get(node, "model", "d", int, 3 if payoff_kind == "brc" else 6)
    rate = _get(node, "model", "rate", float, 0.0)
    vol = node.get("vol", 0.2)
    price = node.get("initial_price", 1.0)
    steps = node.get("steps")
    if steps is None:
        steps = ([1.0 / 12.0] * 12) if payoff_kind == "brc" else [1.0 / 12.0, 11.0 / 12.0]
    try:
        vols = vol * np.eye(d) if isinstance(vol, (int, float)) else np.asarray(vol, dtype=np.float64)
        prices = np.full(d, float(price)) if isinstance(price, (int, float)) else \
            np.asarray(price, dtype=np.float64)
        return BlackScholesModel(initial_prices=prices, vols=vols, rate=rate,
                                 steps=np.asarray(steps, dtype=np.float64))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"model: {e}") from None


def _build_measure(doc: dict, d: int, T: int):
    node = _section(doc, "measure", {"kind", "theta"})
    kind = _get(node, "measure", "kind", str, "product_normal",
                enum={"product_normal", "clayton"})
    try:
        if kind == "clayton":
            theta = _get(node, "measure", "theta", float)
            if theta is None:
                raise ConfigError("measure.theta is required for the clayton measure")
            return CopulaMeasure.clayton(theta, d, T)
        return ProductMeasure.standard_normal(d, T)
    except ValueError as e:
        raise ConfigError(f"measure: {e}") from None


_EST_KEYS = {
    "boost": {"kind", "rounds", "learning_rate", "nodesize", "max_depth",
              "max_leaves", "patience", "seed"},
    "forest": {"kind", "n_trees", "nodesize", "features", "sampling",
               "n_resample", "max_depth", "max_leaves", "seed"},
    "tree": {"kind", "nodesize", "max_depth", "max_leaves", "features", "seed"},
}


def _build_estimator(node: dict, path: str):
    if not isinstance(node, dict):
        raise ConfigError(f"section '{path}' must be a mapping")
    kind = _get(node, path, "kind", str, enum=set(_EST_KEYS))
    if kind is None:
        raise ConfigError(f"{path}.kind is required")
    for key in node:
        if key not in _EST_KEYS[kind]:
            raise ConfigError(f"unknown key '{path}.{key}' for kind '{kind}'")
    features = node.get("features", "all")
    if features != "all" and not isinstance(features, int):
        raise ConfigError(f"{path}.features: expected int or \"all\"")
    try:
        if kind == "boost":
            return BoostConfig(
                rounds=_get(node, path, "rounds", int, 400),
                learning_rate=_get(node, path, "learning_rate", float, 0.1),
                nodesize=_get(node, path, "nodesize", int, 40),
                max_depth=_get(node, path, "max_depth", int, 15),
                max_leaves=_get(node, path, "max_leaves", int),
                patience=_get(node, path, "patience", int, 20),
                seed=_get(node, path, "seed", int, 7))
        if kind == "forest":
            return ForestConfig(
                n_trees=_get(node, path, "n_trees", int, 100),
                nodesize=_get(node, path, "nodesize", int, 5),
                features=features,
                sampling=_get(node, path, "sampling", str, "bootstrap",
                              enum={"bootstrap", "subsample_with", "subsample_without"}),
                n_resample=_get(node, path, "n_resample", int),
                max_depth=_get(node, path, "max_depth", int),
                max_leaves=_get(node, path, "max_leaves", int),
                seed=_get(node, path, "seed", int, 7))
        return TreeConfig(
            nodesize=_get(node, path, "nodesize", int, 5),
            max_depth=_get(node, path, "max_depth", int),
            max_leaves=_get(node, path, "max_leaves", int),
            features=features,
            seed=_get(node, path, "seed", int, 7))
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def _build_bermudan(doc: dict, seed: int) -> BermudanPlan:
    allowed = {"z0", "rate", "sigma", "strike", "n_dates", "horizon",
               "n_train", "n_test", "mode", "estimator"}
    node = _section(doc, "bermudan", allowed, required=True)
    est = node.get("estimator")
    estimator = _build_estimator(est, "bermudan.estimator") if est is not None else \
        ForestConfig(n_trees=30, nodesize=20, features=1, seed=11)
    try:
        return BermudanPlan(
            z0=_get(node, "bermudan", "z0", float, 0.0),
            rate=_get(node, "bermudan", "rate", float, 0.0),
            sigma=_get(node, "bermudan", "sigma", float, 0.2),
            strike=_get(node, "bermudan", "strike", float, 1.0),
            n_dates=_get(node, "bermudan", "n_dates", int, 7),
            horizon=_get(node, "bermudan", "horizon", float, 1.0),
            n_train=_get(node, "bermudan", "n_train", int, 5000),
            n_test=_get(node, "bermudan", "n_test", int, 20000),
            mode=_get(node, "bermudan", "mode", str, "later",
                      enum={"later", "now", "both"}),
            seed=seed, estimator=estimator)
    except ValueError as e:
        raise ConfigError(f"bermudan: {e}") from None


class RunConfig:
    """Parsed and validated configuration document."""

    def __init__(self, doc: dict, args):
        if not isinstance(doc, dict):
            raise ConfigError("top-level config must be a mapping")
        known = {"experiment", "model", "payoff", "measure", "plan", "estimator", "bermudan"}
        for key in doc:
            if key not in known:
                raise ConfigError(f"unknown section '{key}' "
                                  f"(allowed: {', '.join(sorted(known))})")
        exp = _section(doc, "experiment", {"name", "seed", "scale", "out"})
        self.name = _get(exp, "experiment", "name", str, "run")
        self.seed = args.seed if args.seed is not None else \
            _get(exp, "experiment", "seed", int, 0)
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.scale = args.scale if args.scale is not None else \
            _get(exp, "experiment", "scale", str, "desk", enum=set(_SCALES))
        out = args.out if args.out is not None else _get(exp, "experiment", "out", str)
        self.out = Path(out) if out is not None else None
        self.doc = doc
        self.has_bermudan = "bermudan" in doc

    def european_plan(self) -> ExperimentPlan:
        payoff = _build_payoff(self.doc)
        model = _build_model(self.doc, payoff.kind)
        measure = _build_measure(self.doc, model.n_assets, model.n_periods)
        node = _section(self.doc, "plan",
                        {"n_train", "n_valid", "n_test", "n_inner", "dates"})
        base = _SCALE_SIZES[self.scale]
        dates = node.get("dates")
        if dates is not None:
            if not isinstance(dates, list) or not all(isinstance(t, int) for t in dates):
                raise ConfigError("plan.dates must be a list of integers")
            dates = tuple(dates)
        est_node = self.doc.get("estimator")
        estimator = _build_estimator(est_node, "estimator") if est_node is not None else \
            BoostConfig(rounds=400, learning_rate=0.1, nodesize=40, max_depth=15,
                        patience=20, seed=7)
        est_name = est_node.get("kind") if est_node else "boost"
        try:
            return ExperimentPlan(
                name=self.name, payoff=payoff, model=model,
                estimators=((est_name, estimator),),
                n_train=_get(node, "plan", "n_train", int, base[0]),
                n_valid=_get(node, "plan", "n_valid", int, base[1]),
                n_test=_get(node, "plan", "n_test", int, base[2]),
                n_inner=_get(node, "plan", "n_inner", int, base[3]),
                dates=dates, seed=self.seed, measure=measure)
        except ValueError as e:
            raise ConfigError(f"plan: {e}") from None

    def bermudan_plan(self) -> BermudanPlan:
        plan = _build_bermudan(self.doc, self.seed)
        if self.scale == "paper":
            plan = replace(plan, n_test=100000)
        return plan

    def require_out(self) -> Path:
        if self.out is None:
            raise ConfigError("an output directory is required "
                              "(experiment.out or --out)")
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out


def load_config(args) -> RunConfig:
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}{where}: {getattr(e, 'problem', e)}") from None
    return RunConfig(doc or {}, args)


# -------------------------------------------------------------- subcommands


def _sample_stage(plan: ExperimentPlan):
    d, T = plan.model.n_assets, plan.model.n_periods
    out = {}
    for tag, n, stream in (("train", plan.n_train, STREAM_TRAIN),
                           ("valid", plan.valid_size, STREAM_VALID),
                           ("test", plan.n_test, STREAM_TEST)):
        sample = sample_driver(n, d, T, plan.seed, (stream,))
        prices = simulate_bs(plan.model, sample)
        out[tag] = (sample, prices, payoff_value(plan.payoff, plan.model, prices))
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    plan = cfg.european_plan()
    out = cfg.require_out()
    stages = _sample_stage(plan)
    arrays = {}
    meta = {"seed": plan.seed, "name": plan.name}
    for tag, (sample, prices, payoffs) in stages.items():
        arrays[f"{tag}_driver"] = sample.data
        arrays[f"{tag}_prices"] = prices
        arrays[f"{tag}_payoff"] = payoffs
        meta[f"n_{tag}"] = int(sample.data.shape[0])
    np.savez_compressed(out / "samples.npz", **arrays)
    meta["dims"] = [plan.model.n_assets, plan.model.n_periods]
    write_snapshot(out / "config.snapshot", plan)
    with open(out / "samples_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote samples for {sum(v[0].data.shape[0] for v in stages.values())} paths "
          f"to {out}")
    return EXIT_OK


def _load_samples(out: Path):
    path = out / "samples.npz"
    if not path.exists():
        raise ArtifactError(f"missing samples.npz in {out} (run the simulate stage first)")
    return np.load(path)


def cmd_train(cfg: RunConfig) -> int:
    plan = cfg.european_plan()
    out = cfg.require_out()
    data = _load_samples(out)
    name, config = plan.estimators[0]
    fitted = bench._fit_estimator(config, data["train_driver"], data["train_payoff"],
                                  data["valid_driver"], data["valid_payoff"])
    fe = bench.flatten_model(fitted)
    save_flat(fe, out / f"flat_{name}.npz")
    write_flat_text(fe, out / f"flat_{name}.txt")
    with open(out / "training.json", "w") as fh:
        info = {"estimator": name, "n_cells": int(fe.n_cells), "seed": plan.seed}
        if hasattr(fitted, "n_rounds"):
            info["rounds"] = int(fitted.n_rounds)
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"fitted {name}: {fe.n_cells} cells -> {out / f'flat_{name}.npz'}")
    return EXIT_OK


def cmd_value(cfg: RunConfig, dates_arg=None) -> int:
    plan = cfg.european_plan()
    out = cfg.require_out()
    data = _load_samples(out)
    name, _ = plan.estimators[0]
    flat_path = out / f"flat_{name}.npz"
    if not flat_path.exists():
        raise ArtifactError(f"missing {flat_path.name} in {out} (run the train stage first)")
    fe = load_flat(flat_path)
    T = plan.model.n_periods
    dates = plan.eval_dates
    if dates_arg:
        dates = tuple(T if tok.upper() == "T" else int(tok) for tok in dates_arg)
    measure = plan.measure
    surface = value_surface(fe, measure, dates, data["test_driver"],
                            meta={"estimator": name, "seed": plan.seed})
    surface.to_csv(out / f"value_surface_{name}.csv")
    surface.write_meta(out / f"value_surface_{name}.meta.json")
    print(f"valued {data['test_driver'].shape[0]} scenarios at dates {list(dates)} "
          f"-> {out / f'value_surface_{name}.csv'}")
    return EXIT_OK


def _load_surface(path: Path):
    if not path.exists():
        raise ArtifactError(f"missing {path.name} in {path.parent} "
                            "(run the value stage first)")
    rows = np.genfromtxt(path, delimiter=",", names=True)
    dates = tuple(int(t) for t in np.unique(rows["t"]))
    ids = np.unique(rows["scenario_id"]).size
    values = np.empty((ids, len(dates)))
    for k, t in enumerate(dates):
        sel = rows["t"] == t
        order = np.argsort(rows["scenario_id"][sel], kind="stable")
        values[:, k] = rows["value"][sel][order]
    from .valuation import ValueSurface
    return ValueSurface(dates=dates, values=values)


def cmd_risk(cfg: RunConfig) -> int:
    plan = cfg.european_plan()
    out = cfg.require_out()
    data = _load_samples(out)
    name, _ = plan.estimators[0]
    surface = _load_surface(out / f"value_surface_{name}.csv")
    T = plan.model.n_periods
    for t in (0, 1):
        if t not in surface.dates:
            raise ArtifactError(f"value surface lacks date {t}; rerun value with "
                                "--t including 0 and 1")
    v1, _ = oracle_v1(plan.payoff, plan.model, data["test_driver"][:, :, 0],
                      plan.n_inner, plan.seed)
    v0 = float(data["test_payoff"].mean())
    est_long = surface.column(0) - surface.column(1)
    report = risk_report(est_long, v0 - v1, plan.var_alpha, plan.es_alpha)
    bench._write_csv(out / "risk.csv",
                     ("measure", "alpha", "position", "estimate", "oracle",
                      "relative_error_pct"), bench._risk_rows(report))
    bench._write_qq(out / "qq_t1.csv", *detrended_qq(surface.column(1), v1))
    if T in surface.dates:
        bench._write_qq(out / "qq_tT.csv",
                        *detrended_qq(surface.column(T), data["test_payoff"]))
    print(f"risk tables written to {out}")
    return EXIT_OK


def cmd_bermudan(cfg: RunConfig) -> int:
    plan = cfg.bermudan_plan()
    out = cfg.require_out()
    report = run_bermudan(plan, out)
    mass_T = report.stopping[-1]
    print(f"bermudan value0={report.value0:.6f} (truth {report.true_value0:.6f}), "
          f"stopping mass at T: {mass_T:.5f} -> {out}")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    plan = cfg.european_plan()
    out = cfg.require_out()
    report = run_experiment(plan, out)
    if cfg.has_bermudan:
        run_bermudan(cfg.bermudan_plan(), out)
    digest = bundle_hash(out)
    with open(out / "bundle.hash", "w") as fh:
        fh.write(digest + "\n")
    lines = [f"{r.name}: " + ", ".join(f"t={t}: {e:.3f}%" for t, e in r.l2_rows)
             for r in report.results]
    print(f"report bundle at {out} (hash {digest[:16]}...)")
    for line in lines:
        print("  " + line)
    return EXIT_OK


# -------------------------------------------------------------- entry point


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="YAML configuration file")
    p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    p.add_argument("--scale", choices=_SCALES, default=None,
                   help="plan-size preset (default from config, else desk)")
    p.add_argument("--threads", type=int, default=None,
                   help="cap worker threads (default: available cores)")
    p.add_argument("--out", default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treeval",
                                 description="Tree-ensemble payoff learning with "
                                             "closed-form dynamic valuation")
    sub = ap.add_subparsers(dest="command", required=True)
    specs = [("simulate", "draw driver/price samples and payoffs"),
             ("train", "fit the configured estimator and flatten it"),
             ("value", "evaluate the value surface on the test sample"),
             ("risk", "compute risk tables and Q-Q data from the surface"),
             ("bermudan", "run the early-exercise pipeline"),
             ("report", "run the full pipeline and write the report bundle")]
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "value":
            p.add_argument("--t", nargs="+", default=None, metavar="DATE",
                           help='dates to evaluate (integers, or "T")')
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            set_threads(args.threads)
        cfg = load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "value":
            return cmd_value(cfg, args.t)
        if args.command == "risk":
            return cmd_risk(cfg)
        if args.command == "bermudan":
            return cmd_bermudan(cfg)
        return cmd_report(cfg)
    except ConfigError as e:
        print(f"CONFIG_ERROR: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as e:
        print(f"MISSING_ARTIFACT: {e}", file=sys.stderr)
        return EXIT_ARTIFACT
    except ValueError as e:
        print(f"CONFIG_ERROR: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - single-line error contract
        print(f"RUNTIME_ERROR: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
