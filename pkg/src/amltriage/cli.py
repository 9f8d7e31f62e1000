"""Command line entry point: synth, featurize, train, evaluate, sweep.

Stages talk through files in the output directory:

    transactions.csv -> features.csv + featurize.json -> model.json + leaderboard.csv -> report.json
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .evaluation import EvalReport, delay_sweep, feature_set_comparison, window_sweep
from .frame import FeatureFrame
from .graph import WindowConfig
from .ingest import DataError, DatasetSplit, parse_transactions, write_transactions
from .metrics import recall_at_fpr, roc_points
from .models import GbdtParams, ModelArtifact, hyperparameter_search, predict
from .pipeline import Dataset, base_frame, featurize
from .synth import synthesize

log = logging.getLogger("amltriage")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _input_path(cfg: RunConfig) -> Path:
    p = cfg.data["paths"]["input"]
    return Path(p) if p else cfg.out / "transactions.csv"


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise DataError(f"{path} not found; run `{stage}` first")
    return path


def _load_dataset(cfg: RunConfig) -> Dataset:
    return Dataset.from_transactions(parse_transactions(_need(_input_path(cfg), "synth")))


def cmd_synth(cfg: RunConfig) -> dict:
    alerted, rules = synthesize(cfg.synth_config())
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "transactions.csv"
    write_transactions(alerted, path)
    fp = float((alerted["label"] == 0).mean())
    info = {"rules": asdict(rules), "n_alerted": len(alerted), "fp_share": fp}
    cfg.dump(cfg.out / "resolved_synth.yaml", info)
    log.info("wrote %s (%d alerted, %.2f%% legitimate)", path, len(alerted), 100 * fp)
    return info


def cmd_featurize(cfg: RunConfig) -> dict:
    ds = _load_dataset(cfg)
    frame, info = featurize(ds, cfg.feature_config(), seed=cfg.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(cfg.out / "features.csv")
    (cfg.out / "featurize.json").write_text(json.dumps(info, sort_keys=True, indent=1) + "\n")
    cfg.dump(cfg.out / "resolved_featurize.yaml", info)
    log.info("wrote %d rows x %d features", len(frame), len(frame.columns))
    return info


def _load_features(cfg: RunConfig) -> tuple[FeatureFrame, DatasetSplit]:
    frame = FeatureFrame.read_csv(_need(cfg.out / "features.csv", "featurize"))
    info = json.loads(_need(cfg.out / "featurize.json", "featurize").read_text())
    return frame, DatasetSplit.from_dict(info["split"])


def cmd_train(cfg: RunConfig) -> dict:
    frame, split = _load_features(cfg)
    t = cfg.data["train"]
    tr, va = split.mask(frame.days, "train"), split.mask(frame.days, "val")
    result = hyperparameter_search(
        frame.rows(tr), frame.y[tr], frame.rows(va), frame.y[va],
        n_trials=int(t["n_trials"]), seed=cfg.seed, target_fpr=cfg.fpr,
        families=tuple(t["families"]), gbdt_rounds=int(t["gbdt_rounds"]), n_jobs=int(t["n_jobs"]),
    )
    result.leaderboard.to_csv(cfg.out / "leaderboard.csv", index=False, lineterminator="\n", float_format="%.10g")
    if result.best is None:
        raise DataError("every search trial failed; see log")
    result.best.metadata["split"] = split.to_dict()
    result.best.save(cfg.out / "model.json")
    info = {"best_trial": result.best_trial, "best_algorithm": result.best.algorithm}
    cfg.dump(cfg.out / "resolved_train.yaml", info)
    log.info("best trial %d (%s)", info["best_trial"], info["best_algorithm"])
    return info


def cmd_evaluate(cfg: RunConfig) -> dict:
    frame, split = _load_features(cfg)
    model = ModelArtifact.load(_need(cfg.out / "model.json", "train"))
    report = EvalReport(seeds=[cfg.seed])
    for part in ("val", "test"):
        m = split.mask(frame.days, part)
        s = predict(model, frame.rows(m).select(model.features))
        key = f"model/{model.algorithm}/{part}/recall_at_{cfg.fpr:g}fpr"
        report.metrics[key] = recall_at_fpr(s, frame.y[m], cfg.fpr)
        fpr, rec = roc_points(s, frame.y[m])
        report.roc[f"model/{model.algorithm}/{part}"] = {"fpr": fpr.tolist(), "recall": rec.tolist()}
    if cfg.data["evaluate"]["fig3"]:
        ds = _load_dataset(cfg)
        base, _ = base_frame(ds, seed=cfg.seed)
        feature_set_comparison(ds, base, seed=cfg.seed, window=cfg.window(), walk=cfg.walk(),
                               params=_experiment_params(cfg), target_fpr=cfg.fpr, report=report)
    report.config["run"] = cfg.data
    report.write(cfg.out)
    cfg.dump(cfg.out / "resolved_evaluate.yaml")
    return report.metrics


def _experiment_params(cfg: RunConfig) -> GbdtParams:
    return GbdtParams(**cfg.data["experiment_model"])


def cmd_sweep(cfg: RunConfig, kind: str) -> dict:
    ds = _load_dataset(cfg)
    s = cfg.data["sweep"]
    base, _ = base_frame(ds, seed=cfg.seed)
    report = EvalReport()
    params = _experiment_params(cfg)
    out = cfg.out / f"sweep_{kind}"
    if kind == "delay":
        w = cfg.window()
        delay_sweep(ds, base, delays=s["delays"], seeds=s["seeds"], thresholds=s["thresholds"],
                    window=WindowConfig(w.twl_days, w.tws_days, 0), params=params, target_fpr=cfg.fpr, report=report)
    else:
        window_sweep(ds, base, twl_grid=s["twl_grid"], tws_grid=s["tws_grid"], delay=int(s["window_delay"]),
                     seed=cfg.seed, params=params, target_fpr=cfg.fpr, report=report)
    report.config["run"] = cfg.data
    report.write(out)
    cfg.dump(out / "resolved_sweep.yaml")
    return report.to_dict().get("window_best", {})


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--fpr", type=float, help="target false-positive rate (default 0.2)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="amltriage", description="AML alert triage with profile and transaction-graph features")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate the alerted synthetic transactions CSV")
    sub.add_parser("featurize", parents=[common], help="build the feature frame")
    sub.add_parser("train", parents=[common], help="hyperparameter search and model training")
    sub.add_parser("evaluate", parents=[common], help="recall@FPR report for the trained model")
    sw = sub.add_parser("sweep", parents=[common], help="label-delay or window sweep")
    sw.add_argument("kind", choices=["delay", "windows"])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error already printed by argparse
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = RunConfig.load(args.config).override(args.seed, args.out, args.fpr)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "featurize":
            cmd_featurize(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        else:
            cmd_sweep(cfg, args.kind)
    except (UsageError, ConfigError) as exc:
        print(f"amltriage: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"amltriage: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug or an environment problem
        log.debug("internal error", exc_info=True)
        print(f"amltriage: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
