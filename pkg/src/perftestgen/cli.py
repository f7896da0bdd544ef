"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 when ``update``
retrained the model.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import checkpoint, experiments
from .codec import DomainError
from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK, EXIT_USAGE, EXIT_RETRAINED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment TOML file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--checkpoint", type=Path, action="append", default=[],
                        help="model checkpoint (repeat for compare: passive then active)")
    common.add_argument("--size", type=int, action="append", default=[],
                        help="suite size (repeat for compare)")
    common.add_argument("--requirement", type=int, default=1, help="requirement label id")
    common.add_argument("--unique", action="store_true", help="reject duplicate tests")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="perftestgen", description="CGAN-based performance test generation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("train", "passive training on a pre-labelled pool"),
                       ("train-active", "active training from a pre-labelled pool"),
                       ("generate", "generate a test suite from a checkpoint"),
                       ("baseline", "uniform random suite"),
                       ("compare", "generator suites against the random baseline"),
                       ("update", "replay history and retrain if the SUT changed"),
                       ("simulate", "dataset summary of the simulated SUT")):
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def _one(values: list, flag: str, default=None):
    if len(values) > 1:
        raise UsageError(f"{flag} given more than once")
    if not values:
        if default is None:
            raise UsageError(f"{flag} is required")
        return default
    return values[0]


def _run(args) -> int:
    cmd = args.command
    if cmd == "generate":
        cfg = load_config(args.config) if args.config else None
        size = _one(args.size, "--size", 100)
        if size < 1:
            raise UsageError("--size must be >= 1")
        result = experiments.run_generate(cfg, _one(args.checkpoint, "--checkpoint"),
                                          args.requirement, size, unique=args.unique,
                                          seed=args.seed, out_dir=args.out or Path("."))
        print(f"wrote {result['size']} tests ({result['unique']} unique)")
        return EXIT_OK

    cfg = _config(args)
    if cmd == "train":
        s = experiments.run_passive(cfg)
        print(f"steps {s.steps}  accuracy {s.final_accuracy:.2f}  stop {s.stop_reason}")
    elif cmd == "train-active":
        s = experiments.run_active(cfg)
        print(f"steps {s.steps}  accuracy {s.final_accuracy:.2f}  stop {s.stop_reason}")
    elif cmd == "baseline":
        r = experiments.run_baseline(cfg, _one(args.size, "--size", 1000), cfg.out_dir)
        print(f"random suite of {r['size']}: {r['positive']} positive, {r['unique']} unique")
    elif cmd == "compare":
        if not args.checkpoint:
            raise UsageError("--checkpoint is required")
        sizes = args.size or [1000, 5000, 10000]
        for row in experiments.run_compare(cfg, args.checkpoint, sizes, cfg.out_dir,
                                           args.requirement):
            print(row)
    elif cmd == "update":
        report = experiments.run_update(cfg, _one(args.checkpoint, "--checkpoint"), cfg.out_dir)
        if not report.changed:
            print("no behaviour change detected; checkpoint untouched")
            return EXIT_OK
        print(f"retrained for {report.steps} steps ({report.differing} labels changed)")
        return EXIT_RETRAINED
    elif cmd == "simulate":
        s = experiments.simulate(cfg, cfg.out_dir)
        print(f"{s['positives']} of {s['points']} points positive (rate {s['base_rate']:.4f})")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (UsageError, ConfigError, DomainError, FileNotFoundError,
            checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
