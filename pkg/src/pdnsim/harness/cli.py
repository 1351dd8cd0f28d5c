"""Command line: ``pdnsim run`` and ``pdnsim list``."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, apply_override, from_dict, load_file, merge
from .report import emit_report
from .scenarios import REGISTRY, default_config, run_scenario

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_IO = 3


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdnsim", description="Peer-assisted delivery network simulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write its metrics report")
    run.add_argument("scenario")
    run.add_argument("--config", help="YAML file merged over the scenario defaults")
    run.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    run.add_argument("--out", required=True, help="report path")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config field, e.g. tracker.k=5 or peers.0.count=8")
    sub.add_parser("list", help="list the predefined scenarios")
    return ap


def cmd_list(out=None) -> int:
    out = out or sys.stdout
    width = max(map(len, REGISTRY))
    for name in sorted(REGISTRY):
        print(f"{name:<{width}}  {REGISTRY[name].summary}", file=out)
    return EXIT_OK


def cmd_run(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    if args.scenario not in REGISTRY:
        print(f"error: unknown scenario {args.scenario!r} (try `pdnsim list`)", file=err)
        return EXIT_INVALID
    try:
        data = default_config(args.scenario)
        if args.config:
            user = load_file(args.config)
            if user.get("scenario", args.scenario) != args.scenario:
                raise ConfigError([f"scenario: config is for {user['scenario']!r}, not {args.scenario!r}"])
            data = merge(data, user)
        for assignment in args.set:
            apply_override(data, assignment)
        if args.seed is not None:
            data["seed"] = args.seed
        cfg = from_dict(data)
        report = run_scenario(cfg)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=err)
        return EXIT_INVALID
    try:
        emit_report(report, args.out, args.format)
    except OSError as exc:
        print(f"error: cannot write {exc.filename or args.out}: {exc.strerror or exc}", file=err)
        return EXIT_IO
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=out)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        return cmd_list()
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
