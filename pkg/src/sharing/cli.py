"""Command-line entry point: simulate, estimate, sweep and report.

Usage::

    sharing-effects simulate --config configs/sharing.toml --n 1000 --seed 7 --out log.csv
    sharing-effects estimate --log log.csv --policy configs/sharing.toml --out ates.csv
    sharing-effects sweep --config configs/sharing.toml --workers 8 --out runs/sweep
    sharing-effects report runs/sweep --out runs/sweep/plots

Exit codes: 0 success, 2 usage, 3 config, 4 input/output, 5 numeric
degeneracy (a chain hit its cap, or every estimate was degenerate).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

from sharing import __version__
from sharing.config import load_config, load_policy, parse_probs
from sharing.core import ProductionPolicy
from sharing.errors import DegenerateEstimateError, MissingInputError, SharingError
from sharing.estimators import ALL_ESTIMATORS, EstimatorKind, estimate_all
from sharing.experiment import run_sweep
from sharing.logfile import (
    ESTIMATE_REPORT_FORMAT,
    FORMAT_VERSION,
    SESSION_LOG_FORMAT,
    SWEEP_FORMAT,
    RunManifest,
    read_session_log,
    write_session_log,
    write_sweep_tables,
    write_with_manifest,
)
from sharing.report import render_report
from sharing.simulator import (
    PRODUCTION,
    RolloutPolicy,
    SimulationSeed,
    default_workers,
    sample_dataset,
)

logger = logging.getLogger(__name__)

EXIT_IO = 4
LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


# ---------------------------------------------------------------------------
# Argument types
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from exc
    if not (0 <= value < 2**64):
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {value}")
    return value


def _estimator(text: str) -> EstimatorKind:
    try:
        return EstimatorKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sharing-effects",
        description="Simulate sharing chains and estimate treatment effects under interference.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__} (session-log format {FORMAT_VERSION})",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a session log sampled from a config")
    sim.add_argument("--config", type=Path, required=True)
    sim.add_argument("--n", type=_positive_int, required=True, help="number of trajectories")
    sim.add_argument("--seed", type=_seed, default=0)
    sim.add_argument("--stream-id", type=_seed, default=0)
    sim.add_argument(
        "--constant",
        type=int,
        default=None,
        metavar="VARIANT",
        help="roll out the constant policy for VARIANT instead of the production policy",
    )
    sim.add_argument("--workers", type=_positive_int, default=None)
    sim.add_argument("--out", type=Path, required=True)
    sim.set_defaults(handler=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate pairwise treatment effects from a log")
    est.add_argument("--log", type=Path, required=True)
    source = est.add_mutually_exclusive_group(required=True)
    source.add_argument("--policy", type=Path, help="policy or config TOML with π_p")
    source.add_argument("--probs", help="comma-separated π_p, e.g. 0.5,0.25,0.25")
    est.add_argument(
        "--estimator",
        type=_estimator,
        action="append",
        default=None,
        help="restrict to one estimator (repeatable); default: all three",
    )
    est.add_argument("--out", type=Path, default=None, help="report file; default: stdout")
    est.set_defaults(handler=cmd_estimate)

    sweep = sub.add_parser("sweep", help="repeated simulation sweep over sample sizes")
    sweep.add_argument("--config", type=Path, required=True)
    sweep.add_argument("--seed", type=_seed, default=None, help="override sweep.seed")
    sweep.add_argument("--workers", type=_positive_int, default=None)
    sweep.add_argument("--out", type=Path, required=True, help="output directory")
    sweep.set_defaults(handler=cmd_sweep)

    report = sub.add_parser("report", help="render error curves from a sweep directory")
    report.add_argument("sweep_dir", type=Path)
    report.add_argument("--out", type=Path, default=None, help="default: the sweep directory")
    report.set_defaults(handler=cmd_report)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace, argv: list[str]) -> int:
    experiment = load_config(args.config)
    rollout = PRODUCTION if args.constant is None else RolloutPolicy.always(args.constant)
    seed = SimulationSeed(args.seed, args.stream_id)
    workers = args.workers or default_workers()
    dataset = sample_dataset(
        experiment.mdp, rollout, experiment.knob, seed, args.n, workers=workers
    )
    config: dict[str, Any] = experiment.to_dict()
    config["run"] = {"n_trajectories": args.n, "rollout": rollout.describe()}
    manifest = RunManifest.capture(SESSION_LOG_FORMAT, argv, config, seed.to_dict())
    _write_file(args.out, lambda: write_session_log(args.out, dataset, manifest))
    logger.info(
        "wrote %d trajectories (%d sessions) to %s",
        dataset.n_trajectories,
        dataset.n_sessions,
        args.out,
    )
    return 0


def cmd_estimate(args: argparse.Namespace, argv: list[str]) -> int:
    policy: ProductionPolicy = (
        load_policy(args.policy) if args.policy is not None else parse_probs(args.probs)
    )
    kinds = tuple(dict.fromkeys(args.estimator)) if args.estimator else ALL_ESTIMATORS
    dataset, _ = read_session_log(args.log, policy)
    report = estimate_all(dataset, kinds)

    config = {
        "log": str(args.log),
        "policy": list(policy.probs),
        "estimators": [k.value for k in kinds],
        "n_trajectories": dataset.n_trajectories,
        "n_sessions": dataset.n_sessions,
    }
    manifest = RunManifest.capture(ESTIMATE_REPORT_FORMAT, argv, config)
    frame = report.to_frame()
    if args.out is None:
        sys.stdout.write(f"---\n{manifest.to_yaml()}---\n{frame.write_csv()}")
    else:
        _write_file(args.out, lambda: write_with_manifest(args.out, frame, manifest))
    if report.all_degenerate:
        print("[error] every estimate is degenerate (gamma_hat >= 1)", file=sys.stderr)
        return DegenerateEstimateError.exit_code
    return 0


def cmd_sweep(args: argparse.Namespace, argv: list[str]) -> int:
    experiment = load_config(args.config)
    plan = experiment.sweep_plan()
    if args.seed is not None:
        plan = dataclasses.replace(
            plan, base_seed=dataclasses.replace(plan.base_seed, seed=args.seed)
        )
    workers = args.workers or default_workers()
    result = run_sweep(plan, parallelism=workers)

    out_dir: Path = args.out
    created = not out_dir.exists()
    config = experiment.to_dict() | {"sweep": plan.to_dict()}
    manifest = RunManifest.capture(SWEEP_FORMAT, argv, config, plan.base_seed.to_dict())
    written: list[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = write_sweep_tables(out_dir, result, manifest)
    except BaseException:
        if created:
            shutil.rmtree(out_dir, ignore_errors=True)
        else:
            for path in written:
                path.unlink(missing_ok=True)
        raise
    logger.info("wrote %d files to %s", len(written), out_dir)
    return 0


def cmd_report(args: argparse.Namespace, argv: list[str]) -> int:
    if not args.sweep_dir.is_dir():
        raise MissingInputError(f"sweep directory not found: {args.sweep_dir}")
    paths = render_report(args.sweep_dir, args.out or args.sweep_dir)
    logger.info("wrote %d charts", len(paths))
    return 0


def _write_file(path: Path, write: Callable[[], None]) -> None:
    """Run *write*; on failure leave no partial file behind."""
    try:
        write()
    except BaseException:
        Path(path).unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# Main
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args, argv)
    except SharingError as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
