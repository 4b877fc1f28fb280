"""Closed-loop simulation, comparison table and initial-condition sweep stages."""

from __future__ import annotations

import logging

import numpy as np
from daekron.schemas.reports import ComparisonRow, SweepSummary
from daekron.services.solver_settings import SolverSettings, SweepSettings
from energy.dae_reduction import StokesDaeSystem, reduce_system
from energy.feedback_sim import (
    ClosedLoopRun,
    build_feedback_law,
    compare_table,
    comparison_row,
    eval_energy,
    ic_sweep,
    simulate_closed_loop,
)
from energy.poly_algebra import EnergyPolynomial

logger = logging.getLogger(__name__)


def run_simulate_stage(
    system: StokesDaeSystem,
    energy: EnergyPolynomial,
    degree: int,
    x0: np.ndarray,
    horizon: float,
    settings: SolverSettings,
) -> tuple[ClosedLoopRun, ComparisonRow]:
    reduced = reduce_system(system)
    law = build_feedback_law(energy, reduced, degree)
    run = simulate_closed_loop(reduced, law, x0, horizon, settings.integrator, system)
    row = comparison_row(degree, eval_energy(energy.truncate(degree + 1), x0), run)
    if run.max_constraint_residual is not None:
        logger.info(
            "Consistency: constraint %.3e, momentum %.3e", run.max_constraint_residual, run.max_momentum_residual
        )
    return run, row


def run_table_stage(
    system: StokesDaeSystem,
    eta: float,
    degrees: list[int],
    x0: np.ndarray,
    horizon: float,
    settings: SolverSettings,
    energy: EnergyPolynomial | None = None,
) -> list[ComparisonRow]:
    reduced = reduce_system(system)
    return compare_table(reduced, eta, degrees, x0, horizon, settings.integrator, energy, system)


def run_sweep_stage(
    system: StokesDaeSystem,
    eta: float,
    degrees: list[int],
    sweep: SweepSettings,
    settings: SolverSettings,
    energy: EnergyPolynomial | None = None,
    threads: int | None = None,
) -> SweepSummary:
    reduced = reduce_system(system)
    return ic_sweep(reduced, eta, degrees, sweep, settings.integrator, energy, threads)
