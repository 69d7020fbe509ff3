"""``protoloss`` command line.

Exit codes: 0 success, 2 config/validation error, 3 I/O error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment
from .errors import ConfigError, ContractError, ParseError, TrainingDiverged

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("protoloss")


def _split(value: str, kind=str) -> list:
    return [kind(v.strip()) for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protoloss", description="Positive/negative prototype training experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as train.csv/test.csv/meta.json")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides output_dir)")

    p = sub.add_parser("train", help="train one model and write run artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=["CE", "CL", "DPP", "DPNP"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="run directory (overrides output_dir)")

    p = sub.add_parser("analyze", help="compute geometry metrics for a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--bin-width", type=float, default=2.0)

    p = sub.add_parser("compare", help="run a method x seed grid and tabulate results")
    p.add_argument("--config", required=True)
    p.add_argument("--methods", default="CE,CL,DPP,DPNP")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out")
    return parser


def _load(args, **overrides):
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    return experiment.load_config(args.config, overrides)


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = experiment.generate_data(cfg)
    print(f"wrote {out / 'train.csv'}, {out / 'test.csv'}, {out / 'meta.json'}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args, method=args.method, seed=args.seed, epochs=args.epochs)
    try:
        summary = experiment.run_training(cfg)
    except TrainingDiverged as exc:
        print(f"error: {exc}; diagnostics in {Path(cfg.output_dir) / 'diagnostics.json'}", file=sys.stderr)
        return EXIT_NUMERIC
    acc = summary["test_accuracy"]
    print(f"{summary['method']} seed={summary['seed']} train_acc={summary['train_accuracy']:.4f} "
          f"test_acc={'n/a' if acc is None else f'{acc:.4f}'} -> {cfg.output_dir}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    run = Path(args.run)
    try:
        report = experiment.analyze_run(run, args.bin_width)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"min_sep={report['min_sep']:.2f} mean_sep={report['mean_sep']:.2f} "
          f"std={report['std_sep']:.2f} scr={report['scr']:.3f} -> {run / 'geometry_report.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args, epochs=args.epochs)
    try:
        methods = _split(args.methods)
        seeds = _split(args.seeds, int)
    except ValueError as exc:
        raise ConfigError("seeds", str(exc)) from None
    rows, out = experiment.compare(cfg, methods, seeds)
    failed = [r for r in rows if "error" in r]
    for r in failed:
        print(f"error: {r['method']} seed={r['seed']}: {r['error']}", file=sys.stderr)
    print((out / "comparison.md").read_text(), end="")
    if failed:
        return max(r["code"] for r in failed)
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "analyze": cmd_analyze, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ContractError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if args.command != "gen-data" else EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
