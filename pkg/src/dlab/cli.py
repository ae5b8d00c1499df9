"""Command-line entry point: ``dlab run | list | validate``.

Exit codes: 0 = ran and passed, 2 = ran but the measured check failed,
1 = configuration or runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import ConfigError, list_experiments, load_config, run_experiment

log = logging.getLogger("dlab")

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dlab", description="Dispersive-estimate numerical laboratory.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="dotted override, e.g. params.trials=4 (value parsed as JSON when possible)")
    run.add_argument("--jobs", type=int, default=1, help="worker threads for independent evaluations")
    sub.add_parser("list", help="list the registered experiments")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "list":
        for eid, desc, anchor in list_experiments():
            print(f"{eid:<16} {desc}  [{anchor}]")
        return EXIT_PASS

    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_ERROR

    if args.command == "validate":
        print(json.dumps(cfg.as_dict(), indent=2, sort_keys=True))
        return EXIT_PASS

    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        log.info("running %s -> %s", cfg.experiment, cfg.output_dir)
        outcome = run_experiment(cfg, jobs=args.jobs)
    except (ValueError, OSError) as err:
        print(f"error: {cfg.experiment}: {err}", file=sys.stderr)
        return EXIT_ERROR
    status = "PASS" if outcome.passed else "FAIL"
    print(f"{cfg.experiment}: {status}")
    for f in outcome.files:
        print(f"  wrote {f}")
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
