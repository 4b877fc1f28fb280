"""Pipeline entry point for running as a module: python -m pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence

import numpy as np
from daekron.config import get_settings
from daekron.errors import NumericalFailure, ValidationFailure
from daekron.schemas.reports import EnergyKind, EnergyMethod
from daekron.services.solver_settings import SolverSettings, SweepSettings, load_solver_settings
from pydantic import ValidationError

from pipeline.documents import (
    comparison_csv,
    dump_energy,
    dump_reduced,
    dump_run,
    dump_system,
    load_energy,
    load_system,
    run_to_document,
    sweep_csv,
    write_rows_csv,
)
from pipeline.stages.benchmark_stage import BENCHMARK_NAMES, X0_PRESETS, run_benchmark_stage
from pipeline.stages.energy_stage import run_energy_stage
from pipeline.stages.reduce_stage import run_reduce_stage
from pipeline.stages.selfcheck_stage import counting_identity_failures, run_selfcheck_stage
from pipeline.stages.simulate_stage import run_simulate_stage, run_sweep_stage, run_table_stage

logger = logging.getLogger("pipeline")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _configure_logging(verbose: bool, to_stdout: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)-8s %(name)s: %(message)s",
        stream=sys.stdout if to_stdout else sys.stderr,
        force=True,
    )


def _solver_settings(args: argparse.Namespace) -> SolverSettings:
    return load_solver_settings(args.settings or get_settings().settings_file or None)


def _parse_floats(text: str) -> list[float]:
    return [float(part) for part in text.replace(";", ",").split(",") if part.strip()]


def _parse_degrees(text: str) -> list[int]:
    """``"1,2,3"`` or ``"1-5"``."""
    degrees: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            low, high = (int(v) for v in part.split("-", 1))
            degrees.extend(range(low, high + 1))
        else:
            degrees.append(int(part))
    if not degrees or min(degrees) < 1:
        raise ValidationFailure(f"feedback degrees must be positive integers, got '{text}'")
    return degrees


def _resolve_eta(args: argparse.Namespace, metadata_eta: float | None) -> float:
    if args.eta is not None:
        return float(args.eta)
    if metadata_eta is not None:
        return float(metadata_eta)
    raise ValidationFailure("no --eta given and the system file carries no default eta")


def _resolve_x0(args: argparse.Namespace, initial_state: list[float] | None, n: int) -> np.ndarray:
    if args.x0:
        x0 = np.array(_parse_floats(args.x0))
    elif args.x0_preset:
        x0 = np.array(X0_PRESETS[args.x0_preset], dtype=float)
    elif initial_state is not None:
        x0 = np.array(initial_state, dtype=float)
    else:
        raise ValidationFailure("no initial state: pass --x0 or --x0-preset, or store one in the system file")
    if x0.size != n:
        raise ValidationFailure(f"initial state has {x0.size} entries, the reduced system has {n} states")
    return x0


def _digits(args: argparse.Namespace) -> int:
    return int(args.digits) if args.digits is not None else get_settings().csv_digits


def _emit(text: str, output: str | None) -> None:
    payload = write_rows_csv(text, output)
    if not output:
        sys.stdout.write(payload)


def cmd_reduce(args: argparse.Namespace) -> int:
    system, _ = load_system(args.input)
    reduced = run_reduce_stage(system)
    dump_reduced(reduced, args.output)
    return EXIT_OK


def cmd_energy(args: argparse.Namespace) -> int:
    system, metadata = load_system(args.input)
    eta = _resolve_eta(args, metadata.eta)
    poly = run_energy_stage(
        system, EnergyKind(args.kind), eta, args.degree, EnergyMethod(args.method), _solver_settings(args)
    )
    dump_energy(poly, args.output)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _solver_settings(args)
    system, metadata = load_system(args.system)
    energy = load_energy(args.energy)
    degree = args.degree or energy.degree - 1
    x0 = _resolve_x0(args, metadata.initial_state, energy.n)
    horizon = args.horizon or settings.integrator.horizon
    run, row = run_simulate_stage(system, energy, degree, x0, horizon, settings)
    if args.trajectory:
        dump_run(run_to_document(run, degree, energy.eta, horizon), args.trajectory)
    _emit(comparison_csv([row], _digits(args)), args.output)
    return EXIT_OK


def cmd_table(args: argparse.Namespace) -> int:
    settings = _solver_settings(args)
    system, metadata = load_system(args.system)
    energy = load_energy(args.energy) if args.energy else None
    eta = energy.eta if energy is not None else _resolve_eta(args, metadata.eta)
    n = system.n1 - system.n2
    x0 = _resolve_x0(args, metadata.initial_state, n)
    horizon = args.horizon or settings.integrator.horizon
    rows = run_table_stage(system, eta, _parse_degrees(args.degrees), x0, horizon, settings, energy)
    _emit(comparison_csv(rows, _digits(args)), args.output)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = _solver_settings(args)
    system, metadata = load_system(args.system)
    energy = load_energy(args.energy) if args.energy else None
    eta = energy.eta if energy is not None else _resolve_eta(args, metadata.eta)
    overrides = {
        key: value
        for key, value in {
            "count": args.count,
            "seed": args.seed,
            "low": args.low,
            "high": args.high,
            "horizon": args.horizon,
        }.items()
        if value is not None
    }
    sweep = SweepSettings(**{**settings.sweep.model_dump(), **overrides})
    summary = run_sweep_stage(system, eta, _parse_degrees(args.degrees), sweep, settings, energy, args.threads)
    _emit(sweep_csv(summary, _digits(args)), args.output)
    return EXIT_OK


def cmd_selfcheck(args: argparse.Namespace) -> int:
    failures = counting_identity_failures()
    reports = run_selfcheck_stage(args.max_n1, args.max_k, args.seed)
    lines = ["n1,n2,k,expected_rank,rank_full,rank_selected,bordered_side,bordered_rank,projector_error,passed"]
    for r in reports:
        lines.append(
            f"{r.n1},{r.n2},{r.k},{r.expected_rank},{r.rank_full},{r.rank_selected},"
            f"{r.bordered_side},{r.bordered_rank},{r.projector_product_error:.3e},{r.passed}"
        )
    _emit("\n".join(lines) + "\n", args.output)
    if failures:
        logger.error("Counting identity fails for %s", failures)
    if failures or not all(r.passed for r in reports):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    bench = run_benchmark_stage(args.name, args.ne)
    dump_system(bench.system, args.output, bench.eta, bench.initial_state)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--settings", help="JSON file with solver-setting overrides.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--system", required=True, help="System document (JSON).")
    parser.add_argument("--eta", type=float, help="Cost weight (default: from the system file).")
    parser.add_argument("--x0", help="Comma-separated reduced initial state.")
    parser.add_argument("--x0-preset", choices=sorted(X0_PRESETS), help="Built-in initial state.")
    parser.add_argument("--horizon", type=float, help="Integration horizon.")
    parser.add_argument("--digits", type=int, help="Significant digits in CSV output.")
    parser.add_argument("--output", help="Output file (default: stdout).")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipeline", description="Energy functions and feedback for Stokes-type DAEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="Validate and reduce a system to its ODE form.")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_reduce)

    p = sub.add_parser("energy", help="Compute past or future energy coefficients.")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=[k.value for k in EnergyKind], default=EnergyKind.FUTURE.value)
    p.add_argument("--eta", type=float)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--method", choices=[m.value for m in EnergyMethod], default=EnergyMethod.PROJECTED.value)
    p.add_argument("--output", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_energy)

    p = sub.add_parser("simulate", help="Simulate one closed loop and compare with the value prediction.")
    _add_run_options(p)
    p.add_argument("--energy", required=True, help="Future energy document.")
    p.add_argument("--degree", type=int, help="Feedback degree (default: energy degree - 1).")
    p.add_argument("--trajectory", help="Write the run document (JSON) here.")
    _add_common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("table", help="Value prediction against integrated cost per feedback degree.")
    _add_run_options(p)
    p.add_argument("--energy", help="Future energy document (default: computed).")
    p.add_argument("--degrees", default="1-3", help="Feedback degrees, e.g. '1,2,3' or '1-5'.")
    _add_common(p)
    p.set_defaults(handler=cmd_table)

    p = sub.add_parser("sweep", help="Random initial-condition sweep.")
    p.add_argument("--system", required=True)
    p.add_argument("--energy")
    p.add_argument("--eta", type=float)
    p.add_argument("--degrees", default="1-3")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--low", type=float)
    p.add_argument("--high", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--threads", type=int, help="Worker processes (default: DAEKRON_THREADS).")
    p.add_argument("--digits", type=int)
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("selfcheck", help="Brute-force rank and identity checks.")
    p.add_argument("--max-n1", type=int, default=5)
    p.add_argument("--max-k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(handler=cmd_selfcheck)

    p = sub.add_parser("benchmark", help="Write a built-in system document.")
    p.add_argument("--name", choices=BENCHMARK_NAMES, required=True)
    p.add_argument("--ne", type=int, help="Element count for the Fisher systems.")
    p.add_argument("--output", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_benchmark)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    _configure_logging(args.verbose, to_stdout=bool(getattr(args, "output", None)))
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except np.linalg.LinAlgError as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ValidationFailure, ValidationError, json.JSONDecodeError, FileNotFoundError, ValueError) as exc:
        if isinstance(exc, ValidationFailure) and exc.report is not None:
            logger.error("%s", exc.report.model_dump_json(indent=2))
        logger.error("Validation failed: %s", exc)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
