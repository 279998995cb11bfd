"""Command-line driver: ``trickle-lab {sim,star,rpl,validate} --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiment import ConfigError, load_config, run_experiment, validation_report

# subcommand -> experiment kind it runs
COMMANDS = {"sim": "steady-state", "star": "star-analysis", "rpl": "rpl"}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("replications must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trickle-lab", description="Trickle adaptive-k experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sim": "steady-state per-degree sweep (fig1/fig2/fig3 tables)",
        "star": "star-network analysis table (figp)",
        "rpl": "RPL DODAG formation sweep (rpl_metrics)",
        "validate": "check a config and print derived seeds without running",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=_u64, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--replications", type=_positive, help="override the replication count")
        p.add_argument("--quiet", action="store_true", help="only print errors")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    overrides = {"seed": args.seed, "output_dir": args.out, "replications": args.replications}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "validate":
            print(validation_report(cfg))
            return 0
        expected = COMMANDS[args.command]
        if cfg.kind != expected:
            raise ConfigError(f"'{args.command}' runs {expected} configs, but the config is {cfg.kind}")
        hashes = run_experiment(cfg)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        for name in hashes:
            print(cfg.output_dir / name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
