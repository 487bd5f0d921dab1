"""Command line: ``relaxlimit run|sweep|check|version``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .harness import (
    EXIT_CERTIFICATION,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    check_specs,
    cmd_run,
    cmd_sweep,
    load_config,
)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relaxlimit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "one paired relaxation/limit run"),
                           ("sweep", "runs over an eps list with a rate fit"),
                           ("check", "randomised identity and consistency checks")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=name != "check", help="INI configuration file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed (check suite)")
        p.add_argument("--workers", type=int, default=1, help="parallel eps-points (sweep)")
    sub.add_parser("version", help="print the package version")
    return ap


def _check(args) -> int:
    from .checks import run_checks

    pressure, stress, mu, settings, seed = check_specs(args.config)
    seed = seed if args.seed is None else args.seed
    suite = run_checks(seed=seed, pressure=pressure, stress=stress, mu=mu, n_states=settings.n_states,
                       mutate=settings.inject_sign_flip)
    for line in suite.lines():
        print(line)
    n_fail = len(suite.failures())
    print(f"{len(suite.results)} checks, {n_fail} failed (seed {seed})")
    return EXIT_OK if suite.passed else EXIT_CERTIFICATION


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        if args.command == "check":
            return _check(args)
        cfg = load_config(args.config, args.seed)
        if args.command == "run":
            return cmd_run(cfg, args.out)
        return cmd_sweep(cfg, args.out, max(1, args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
