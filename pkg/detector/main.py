from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from detector import __version__
from detector.cli.commands import cmd_evaluate, cmd_sample, cmd_score, cmd_select, cmd_synth, cmd_train
from detector.config import load_pipeline_config, settings
from detector.utils.errors import DetectorError, InvalidConfig
from detector.utils.logger import get_logger

log = get_logger("main")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config file (key = value)")
    common.add_argument("--seed", help="run seed, unsigned 64-bit")
    common.add_argument("--output-dir", help="directory for every output file")
    common.add_argument("--threads", help="worker threads")
    common.add_argument("--threshold", help="decision threshold for ACC/P/R/F")
    common.add_argument("--skip-bad-rows", action="store_true", help="skip malformed rows instead of failing")
    common.add_argument("--has-header", action="store_true", help="batch files start with a header line")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detector", description=f"{settings.APP_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    sub.add_parser("sample", parents=[common], help="subsample negatives and split train/validation")
    sub.add_parser("train", parents=[common], help="fit the configured learner")
    sub.add_parser("select", parents=[common], help="cross-validated grid search per learner")

    evaluate = sub.add_parser("evaluate", parents=[common], help="compare model artifacts")
    evaluate.add_argument("artifacts", nargs="+", type=Path)
    evaluate.add_argument("--data", nargs="+", type=Path, default=[], help="labeled batch files instead of the validation split")
    evaluate.add_argument("--truth", type=Path, help="truth file for --data")
    evaluate.add_argument("--layout", choices=["validation", "test"])

    score = sub.add_parser("score", parents=[common], help="score unlabeled revisions")
    score.add_argument("artifact", type=Path)
    score.add_argument("data", nargs="+", type=Path)
    score.add_argument("--out", type=Path, help="output file (default <output-dir>/scores.tsv)")

    synth = sub.add_parser("synth", help="write the synthetic corpus")
    synth.add_argument("out_dir", type=Path)
    synth.add_argument("--rows", type=int, default=5000)
    synth.add_argument("--batches", type=int, default=3)
    synth.add_argument("--seed", type=int, default=0)
    return parser


def collect_overrides(args: argparse.Namespace) -> list[tuple[str, str]]:
    """`--set` pairs first, then the dedicated flags, so flags win."""
    pairs: list[tuple[str, str]] = []
    for item in args.overrides:
        if "=" not in item:
            raise InvalidConfig(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value.strip()))

    flags = {
        "seed": args.seed,
        "output_dir": args.output_dir,
        "threads": args.threads,
        "eval.threshold": args.threshold,
    }
    pairs.extend((key, value) for key, value in flags.items() if value is not None)
    if args.skip_bad_rows:
        pairs.append(("skip_bad_rows", "true"))
    if args.has_header:
        pairs.append(("has_header", "true"))
    return pairs


def run(args: argparse.Namespace) -> None:
    if args.command == "synth":
        cmd_synth(args.out_dir, n_rows=args.rows, n_batches=args.batches, seed=args.seed)
        return

    cfg = load_pipeline_config(args.config, collect_overrides(args))
    if args.command == "sample":
        cmd_sample(cfg)
    elif args.command == "train":
        cmd_train(cfg)
    elif args.command == "select":
        cmd_select(cfg)
    elif args.command == "evaluate":
        cmd_evaluate(cfg, args.artifacts, data_paths=args.data, truth_path=args.truth, layout=args.layout)
    elif args.command == "score":
        cmd_score(cfg, args.artifact, args.data, args.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log.info("Starting %s %s", settings.APP_NAME, args.command)
    try:
        run(args)
    except DetectorError as exc:
        log.error("%s failed: %s", args.command, exc)
        return exc.exit_code
    except Exception:
        log.exception("%s failed unexpectedly", args.command)
        return 1
    log.info("%s done", args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
