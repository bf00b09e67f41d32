"""Command line entry point: python -m app.cli {simulate,mms,oracle,validate} <config>."""
from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

import orjson

from app.core.config import get_settings
from app.core.errors import ConfigInvalid, NotConverged, SolverFailure, ThermoplastError
from app.services.logger import get_logger

log = get_logger(__name__)

EXIT_OK = 0


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="thermoplast",
                                     description="Coupled thermo-visco-plastic simulation on boxes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run the coupled simulation and write snapshots, diagnostics and a summary"),
        ("mms", "manufactured-solution convergence study"),
        ("oracle", "compare the staggered solution against the monolithic Newton reference"),
        ("validate", "check a configuration without running it"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the sectioned key=value config file")
        p.add_argument("--output", default=None, help="output directory (overrides [output] directory)")
        p.add_argument("--single-thread", action="store_true", help="force sequential assembly")
        if name == "mms":
            p.add_argument("--levels", type=int, default=3, help="number of refinement levels")
    return parser.parse_args(argv)


def _emit(payload: dict) -> None:
    sys.stdout.write(orjson.dumps(payload).decode() + "\n")
    sys.stdout.flush()


def run(args: argparse.Namespace) -> int:
    # late import so --single-thread takes effect before any settings are read by the solvers
    from app.services import harness

    config = harness.load_config(args.config)
    if args.command == "validate":
        _emit({"status": "ok", "violations": []})
        return EXIT_OK
    if args.command == "simulate":
        summary = harness.run_simulate(config, args.output)
        if not summary.converged:
            raise NotConverged(f"outer iteration {summary.status} after {summary.outer_iterations} iterations",
                               detail={"deltas": summary.deltas[-5:], "files": summary.files})
        _emit({"status": "ok", "outer_iterations": summary.outer_iterations,
               "theta_norm_LpLr": summary.theta_norm_LpLr, "summary": summary.files.get("summary")})
        return EXIT_OK
    if args.command == "mms":
        rows = harness.run_mms(config, args.levels, args.output)
        _emit({"status": "ok", "rows": [r.model_dump() for r in rows]})
        return EXIT_OK
    report = harness.run_oracle(config, args.output)
    _emit(report.model_dump(mode="json", exclude={"picard"}))
    if report.status == "oracle-failed":
        return SolverFailure.exit_code
    if report.status == "picard-diverged":
        return NotConverged.exit_code
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    if args.single_thread:
        os.environ["THERMOPLAST_SINGLE_THREAD"] = "1"
        get_settings.cache_clear()
    try:
        return run(args)
    except ConfigInvalid as exc:
        for v in exc.violations:
            log.error(f"config-invalid: {v}")
        _emit(exc.payload())
        return exc.exit_code
    except ThermoplastError as exc:
        log.error(f"{exc.reason}: {exc}")
        _emit(exc.payload())
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
