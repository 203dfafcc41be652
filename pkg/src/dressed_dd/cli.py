"""Command-line scenario runner.

Exit codes: 0 success, 1 expectation failure (``check``), 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .analysis import FitError
from .config import ConfigError, dump_scenario, fixture_path, list_fixtures, load_scenario
from .evolve import NumericalError
from .output import emit_results
from .runner import check_expectations, run_scenario

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dressed-dd", description="Dressed-state dynamical decoupling simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run a scenario and write results"), ("check", "run and assert the scenario's expectations")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("scenario", help="fixture name or path to a YAML scenario")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--traj", type=int, default=None, help="override the number of noise trajectories")
        sp.add_argument("--out", default=None, help="output directory (default: scenario output.dir)")
        sp.add_argument("--format", choices=("csv", "structured"), default=None, help="table format")
    sub.add_parser("list-fixtures", help="list bundled scenario fixtures")
    sp = sub.add_parser("validate", help="validate a scenario and print it in resolved form")
    sp.add_argument("scenario", help="fixture name or path to a YAML scenario")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-fixtures":
            for name in list_fixtures():
                print(f"{name}\t{fixture_path(name)}")
            return EXIT_OK
        scenario = load_scenario(args.scenario)
        if args.command == "validate":
            sys.stdout.write(dump_scenario(scenario))
            return EXIT_OK
        if args.traj is not None and args.traj < 1:
            raise ConfigError("--traj: must be >= 1")
        bundle = run_scenario(scenario, seed=args.seed, trajectories=args.traj)
        out = args.out or scenario.output.dir
        manifest = emit_results(bundle, out, args.format or scenario.output.format)
        print(f"wrote {len(manifest['files'])} files to {out}")
        for name, value in sorted(bundle.scalars.items()):
            print(f"  {name} = {value:.6g}")
        if args.command == "check":
            results = check_expectations(scenario, bundle)
            for name, ok, value, bound in results:
                print(f"{'PASS' if ok else 'FAIL'} {name} = {value:.6g} ({bound})")
            if not all(ok for _, ok, _, _ in results):
                return EXIT_ASSERT
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FitError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
