"""Command-line front end for the two-stage severity pipeline.

    severitas synth    --out data --seed 7          # bundled synthetic data
    severitas ingest   --config run.json            # encode + 60/20/20 split
    severitas resample --config run.json            # SMOTEENN on the train split
    severitas train    --config run.json --model armnet
    severitas evaluate --config run.json --model armnet
    severitas tune     --config run.json --model mambanet --trials 100
    severitas report   --config run.json            # severity-by-year counts

Every command is idempotent for a fixed (inputs, seed) pair and writes its
artifacts atomically.  `SEVERITAS_THREADS` caps tune's worker threads
(default 1, which is also the bit-reproducible setting).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .pipeline import (PipelineConfig, run_evaluate, run_ingest, run_report,
                       run_resample, run_train, run_tune)
from .reporting import ClassMetrics, format_metrics_table
from .synth import SynthSpec, write_dataset


def _add_common(parser, model_flag=True):
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="master seed override (u64)")
    parser.add_argument("--out", default=None, help="output directory override")
    if model_flag:
        parser.add_argument("--model", choices=["armnet", "mambanet"], default=None)
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="mode", action="store_const", const="strict")
    mode.add_argument("--lenient", dest="mode", action="store_const", const="lenient")
    parser.set_defaults(mode=None)


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json_file(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ValueError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = Path(args.out)
    if args.mode is not None:
        cfg.mode = args.mode
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="severitas", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the bundled synthetic dataset + schema config")
    p.add_argument("--out", required=True, help="directory for crashes.csv and schema_config.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", default="600,120,480", help="KA,BC,O row counts")
    p.add_argument("--class-sep", type=float, default=1.0)
    p.add_argument("--informative-prob", type=float, default=0.65)

    for name, help_text in (("ingest", "load CSV, split, fit encoders, write encoded splits"),
                            ("resample", "SMOTEENN over the encoded training split"),
                            ("report", "per-(year, class) severity counts")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p, model_flag=False)

    p = sub.add_parser("train", help="train one model on the resampled training split")
    _add_common(p)
    p = sub.add_parser("evaluate", help="metrics + confusion matrices for a trained model")
    _add_common(p)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p = sub.add_parser("tune", help="random hyperparameter search")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            ka, bc, o = (int(x) for x in args.counts.split(","))
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            spec = SynthSpec(counts={"KA": ka, "BC": bc, "O": o}, seed=args.seed,
                             class_sep=args.class_sep, informative_prob=args.informative_prob)
            write_dataset(out / "crashes.csv", out / "schema_config.json", spec)
            print(f"wrote {out / 'crashes.csv'} ({ka + bc + o} rows) and {out / 'schema_config.json'}")
            return 0

        cfg = _load_config(args)
        if args.command == "ingest":
            report = run_ingest(cfg)
            print(f"ingested {report['rows_loaded']} rows "
                  f"(dropped {report['rows_dropped']}), encoded width {report['encoded_width']}")
            for tag, c in report["splits"].items():
                print(f"  {tag}: {c['rows']} rows  KA={c['KA']} BC={c['BC']} O={c['O']}")
        elif args.command == "resample":
            report = run_resample(cfg)
            for cls, c in report.items():
                print(f"  {cls}: before={c['before']} after_smote={c['after_smote']} "
                      f"after_enn={c['after_enn']} (+{c['synthesized']} synth, -{c['removed']} removed)")
        elif args.command == "train":
            result = run_train(cfg, args.model,
                               progress=lambda r: print(
                                   f"  epoch {r.epoch:3d}  train {r.train_loss:.4f}  "
                                   f"val {r.val_loss:.4f}  lr {r.lr:g}"))
            print(f"best epoch {result.best_epoch} of {result.epochs_ran} "
                  f"(early stop: {result.stopped_early}), val accuracy {result.val_accuracy:.4f}")
        elif args.command == "evaluate":
            payload = run_evaluate(cfg, args.model, split=args.split)
            metrics = ClassMetrics(per_class=payload["per_class"],
                                   overall_accuracy=payload["overall_accuracy"],
                                   degenerate=payload["degenerate"])
            print(format_metrics_table(payload["model"], metrics))
            print(f"mean log loss: {payload['mean_log_loss']:.6f}")
        elif args.command == "tune":
            ranked = run_tune(cfg, args.model, trials=args.trials)
            best = ranked[0]
            print(f"{len(ranked)} trials; best trial {best.trial}: "
                  f"val accuracy {best.val_accuracy:.4f}, {best.hyperparams}")
        elif args.command == "report":
            rows = run_report(cfg)
            print(f"wrote severity_by_year.csv ({len(rows)} year/class rows)")
        return 0
    except Exception as exc:  # single-line, machine-parseable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
