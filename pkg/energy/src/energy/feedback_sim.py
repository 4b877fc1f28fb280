"""Polynomial feedback laws and closed-loop simulation of the reduced ODE.

The running cost ``1/2 (|C_d x_d|^2 + |u|^2 / eta)`` is integrated as an extra
state, so its accuracy follows the integrator tolerances. Runs stop early
once the state has decayed below ``termination_norm``; runs that blow up past
``divergence_norm`` are flagged as divergent rather than raising.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from daekron.config import get_settings
from daekron.errors import DimensionError, ValidationFailure
from daekron.schemas.reports import ComparisonRow, DegreeSweepSummary, EnergyKind, SweepSummary
from daekron.services.solver_settings import IntegratorSettings, SweepSettings
from scipy.integrate import solve_ivp

from energy.dae_reduction import (
    ReducedOdeSystem,
    StokesDaeSystem,
    lift_state,
    lift_velocity,
    momentum_residual,
    recover_algebraic,
)
from energy.energy_coeffs import SystemLike, as_dynamics, compute_future_energy
from energy.poly_algebra import (
    EnergyPolynomial,
    control_coefficients,
    control_jacobian,
    evaluate_control,
    hamiltonian_weights,
)

logger = logging.getLogger(__name__)

_INTEGRATOR = IntegratorSettings()
_SWEEP = SweepSettings()


def eval_energy(poly: EnergyPolynomial, x: np.ndarray) -> float:
    """``1/2 sum_k w_k^T x^(k)``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != poly.n:
        raise DimensionError(f"energy has dimension {poly.n}, state has {x.size}")
    return poly.value(x)


@dataclass(eq=False)
class FeedbackLaw:
    """``u(x) = sum_{j=1..d} U_j x^(j)`` with symmetric rows in every ``U_j``."""

    controls: dict[int, np.ndarray]
    eta: float
    n: int
    m: int

    @property
    def degree(self) -> int:
        return max(self.controls)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return evaluate_control(self.controls, x)

    def directional_derivative(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return control_jacobian(self.controls, x) @ np.asarray(v, dtype=float).ravel()

    def truncate(self, degree: int) -> FeedbackLaw:
        if not 1 <= degree <= self.degree:
            raise ValueError(f"cannot truncate a degree-{self.degree} feedback to degree {degree}")
        kept = {j: U for j, U in self.controls.items() if j <= degree}
        return FeedbackLaw(controls=kept, eta=self.eta, n=self.n, m=self.m)


def build_feedback_law(poly: EnergyPolynomial, system: SystemLike, degree: int | None = None) -> FeedbackLaw:
    """Feedback of ``degree`` (default ``poly.degree - 1``) from a future energy."""
    if poly.kind is not EnergyKind.FUTURE:
        raise ValidationFailure(f"feedback laws need a future energy, got {poly.kind.value}")
    top = poly.degree - 1
    degree = top if degree is None else degree
    if not 1 <= degree <= top:
        raise ValueError(f"a degree-{poly.degree} energy supports feedback degrees 1..{top}, got {degree}")
    dyn = as_dynamics(system)
    if dyn.n != poly.n:
        raise DimensionError(f"energy has dimension {poly.n}, system has {dyn.n}")
    rho, _ = hamiltonian_weights(poly.kind, poly.eta)
    controls = control_coefficients(dyn, poly.gradient_coefficients(), rho, degree)
    return FeedbackLaw(controls=controls, eta=poly.eta, n=dyn.n, m=dyn.m)


def eval_feedback(
    poly: EnergyPolynomial, reduced: SystemLike, x_d: np.ndarray, degree: int | None = None
) -> np.ndarray:
    """Control of the feedback law built from ``poly`` at ``x_d``."""
    return build_feedback_law(poly, reduced, degree)(x_d)


@dataclass(eq=False)
class ClosedLoopRun:
    """Trajectory and accumulated cost of one closed-loop simulation."""

    t: np.ndarray
    x_d: np.ndarray  # (n, len(t))
    u: np.ndarray  # (m, len(t))
    cost: np.ndarray  # accumulated, same length as t
    diverged: bool
    terminated_early: bool
    final_norm: float
    x1: np.ndarray | None = None
    max_constraint_residual: float | None = None
    max_momentum_residual: float | None = None
    message: str = ""
    samples: list[int] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return float(self.cost[-1])

    @property
    def final_time(self) -> float:
        return float(self.t[-1])


def _running_cost(dyn_C: np.ndarray, x: np.ndarray, u: np.ndarray, eta: float) -> float:
    y = dyn_C @ x
    value = float(y @ y)
    if eta != 0.0:
        value += float(u @ u) / eta
    return 0.5 * value


def _norm_event(threshold: float, direction: float) -> Callable[[float, np.ndarray], float]:
    def event(t: float, z: np.ndarray) -> float:
        return float(np.linalg.norm(z[:-1])) - threshold

    event.terminal = True  # type: ignore[attr-defined]
    event.direction = direction  # type: ignore[attr-defined]
    return event


def simulate_closed_loop(
    reduced: SystemLike,
    feedback: FeedbackLaw,
    x0: np.ndarray,
    horizon: float | None = None,
    settings: IntegratorSettings = _INTEGRATOR,
    system: StokesDaeSystem | None = None,
) -> ClosedLoopRun:
    """Integrate ``x_d' = f(x_d, u(x_d))`` with the running cost as an augmented state.

    With ``system`` given (and ``reduced`` a :class:`ReducedOdeSystem`), up to
    ``max_consistency_samples`` points of a non-divergent run are lifted back to
    the DAE and checked against the constraint and the momentum equation.
    """
    dyn = as_dynamics(reduced)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != dyn.n or feedback.n != dyn.n:
        raise DimensionError(f"system has {dyn.n} states, x0 has {x0.size}, feedback expects {feedback.n}")
    horizon = settings.horizon if horizon is None else horizon
    eta = feedback.eta

    if np.linalg.norm(x0) < settings.termination_norm:
        u0 = feedback(x0)
        return ClosedLoopRun(
            t=np.zeros(1),
            x_d=x0[:, None],
            u=u0[:, None],
            cost=np.zeros(1),
            diverged=False,
            terminated_early=True,
            final_norm=float(np.linalg.norm(x0)),
            max_constraint_residual=0.0 if system is not None else None,
            max_momentum_residual=0.0 if system is not None else None,
        )

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        x = z[:-1]
        u = feedback(x)
        return np.append(dyn.vector_field(x, u), _running_cost(dyn.C, x, u, eta))

    decayed = _norm_event(settings.termination_norm, -1.0)
    blown_up = _norm_event(settings.divergence_norm, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            rhs,
            (0.0, horizon),
            np.append(x0, 0.0),
            method="RK45",
            rtol=settings.rtol,
            atol=settings.atol,
            events=[decayed, blown_up],
        )

    x_d, cost = sol.y[:-1], sol.y[-1]
    finite = bool(np.all(np.isfinite(sol.y)))
    hit_blowup = sol.t_events[1].size > 0
    diverged = sol.status == -1 or hit_blowup or not finite
    terminated_early = sol.t_events[0].size > 0
    final_norm = float(np.linalg.norm(x_d[:, -1])) if finite else float("inf")
    if diverged:
        logger.warning(
            "Closed loop of degree %d diverged at t=%.3g (|x|=%.3e): %s",
            feedback.degree,
            sol.t[-1],
            final_norm,
            sol.message,
        )
    if finite:
        u = np.column_stack([feedback(x_d[:, i]) for i in range(x_d.shape[1])])
    else:
        u = np.full((feedback.m, sol.t.size), np.nan)
    run = ClosedLoopRun(
        t=sol.t,
        x_d=x_d,
        u=u,
        cost=cost,
        diverged=diverged,
        terminated_early=terminated_early,
        final_norm=final_norm,
        message=str(sol.message),
    )
    if system is not None and isinstance(reduced, ReducedOdeSystem) and not diverged:
        _check_consistency(run, reduced, system, feedback, settings.max_consistency_samples)
    logger.debug(
        "Degree-%d run: t_end=%.3g, cost=%.6g, diverged=%s", feedback.degree, run.final_time, run.total_cost, diverged
    )
    return run


def _check_consistency(
    run: ClosedLoopRun,
    reduced: ReducedOdeSystem,
    system: StokesDaeSystem,
    feedback: FeedbackLaw,
    max_samples: int,
) -> None:
    """Lift sampled states to the DAE and record the worst constraint and momentum residuals."""
    dyn = reduced.normalized
    count = run.t.size
    picks = sorted(set(np.linspace(0, count - 1, min(max_samples, count)).astype(int).tolist())) if max_samples else []
    x1_columns = []
    worst_constraint = worst_momentum = 0.0
    for i in picks:
        x, u = run.x_d[:, i], run.u[:, i]
        x_dot = dyn.vector_field(x, u)
        u_dot = feedback.directional_derivative(x, x_dot)
        x1 = lift_state(reduced, x, u)
        x1_dot = lift_velocity(reduced, x_dot, u_dot)
        x2 = recover_algebraic(system, x1, x1_dot, u, strict=False)
        worst_constraint = max(worst_constraint, float(np.linalg.norm(system.constraint_residual(x1, u))))
        worst_momentum = max(worst_momentum, momentum_residual(system, x1, x1_dot, x2, u))
        x1_columns.append(x1)
    run.samples = picks
    run.x1 = np.column_stack(x1_columns) if x1_columns else np.zeros((system.n1, 0))
    run.max_constraint_residual = worst_constraint
    run.max_momentum_residual = worst_momentum


def comparison_row(degree: int, value: float, run: ClosedLoopRun) -> ComparisonRow:
    """``abs_err = |value - integral|`` and ``rel_err_pct = abs_err / integral * 100``; blank when diverged."""
    if run.diverged:
        return ComparisonRow(degree=degree, value=value, diverged=True)
    integral = run.total_cost
    abs_err = abs(value - integral)
    if integral != 0.0:
        rel = abs_err / abs(integral) * 100.0
    else:
        rel = 0.0 if abs_err == 0.0 else float("inf")
    return ComparisonRow(degree=degree, value=value, integral=integral, abs_err=abs_err, rel_err_pct=rel)


def compare_table(
    reduced: SystemLike,
    eta: float,
    degrees: list[int],
    x0: np.ndarray,
    horizon: float | None = None,
    settings: IntegratorSettings = _INTEGRATOR,
    energy: EnergyPolynomial | None = None,
    system: StokesDaeSystem | None = None,
) -> list[ComparisonRow]:
    """One row per feedback degree ``d``: value of degree ``d + 1`` at ``x0`` against the integrated cost."""
    if not degrees:
        return []
    energy = _energy_for(reduced, eta, max(degrees), energy)
    x0 = np.asarray(x0, dtype=float).ravel()
    law = build_feedback_law(energy, reduced, max(degrees))
    rows = []
    for d in degrees:
        value = eval_energy(energy.truncate(d + 1), x0)
        run = simulate_closed_loop(reduced, law.truncate(d), x0, horizon, settings, system)
        rows.append(comparison_row(d, value, run))
        logger.info("Degree %d: value %.6g, integral %s", d, value, rows[-1].integral)
    return rows


def _energy_for(reduced: SystemLike, eta: float, max_degree: int, energy: EnergyPolynomial | None) -> EnergyPolynomial:
    if energy is None:
        return compute_future_energy(reduced, eta, max_degree + 1)
    if energy.kind is not EnergyKind.FUTURE:
        raise ValidationFailure(f"comparison tables need a future energy, got {energy.kind.value}")
    if energy.degree < max_degree + 1:
        raise ValidationFailure(f"a degree-{max_degree} feedback needs an energy of degree {max_degree + 1}")
    return energy


def _sweep_task(
    args: tuple[SystemLike, FeedbackLaw, np.ndarray, float, IntegratorSettings],
) -> tuple[bool, float]:
    reduced, law, x0, horizon, settings = args
    run = simulate_closed_loop(reduced, law, x0, horizon, settings)
    return run.diverged, run.total_cost if not run.diverged else float("nan")


def ic_sweep(
    reduced: SystemLike,
    eta: float,
    degrees: list[int],
    sweep: SweepSettings = _SWEEP,
    settings: IntegratorSettings = _INTEGRATOR,
    energy: EnergyPolynomial | None = None,
    threads: int | None = None,
) -> SweepSummary:
    """Uniform initial conditions in ``[low, high]^n``; per degree, unstable count and mean relative error.

    Unstable runs are left out of the averages. Runs go to at most ``threads``
    worker processes (default ``DAEKRON_THREADS``); aggregation keeps sample order.
    """
    summary = SweepSummary(count=sweep.count, seed=sweep.seed, low=sweep.low, high=sweep.high, horizon=sweep.horizon)
    if sweep.count == 0 or not degrees:
        summary.degrees = [DegreeSweepSummary(degree=d) for d in degrees]
        return summary
    dyn = as_dynamics(reduced)
    energy = _energy_for(reduced, eta, max(degrees), energy)
    law = build_feedback_law(energy, reduced, max(degrees))
    rng = np.random.default_rng(sweep.seed)
    samples = rng.uniform(sweep.low, sweep.high, size=(sweep.count, dyn.n))
    workers = min(threads or get_settings().threads, sweep.count)
    logger.info(
        "Sweep: %d initial conditions, degrees %s, horizon %g (workers=%d)",
        sweep.count,
        degrees,
        sweep.horizon,
        workers,
    )

    for d in degrees:
        value_poly = energy.truncate(d + 1)
        tasks = [(reduced, law.truncate(d), x0, sweep.horizon, settings) for x0 in samples]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_sweep_task, tasks))
        else:
            results = [_sweep_task(task) for task in tasks]

        unstable = 0
        errors = []
        for x0, (diverged, integral) in zip(samples, results, strict=True):
            if diverged:
                unstable += 1
                continue
            if integral > 0.0:
                errors.append(abs(eval_energy(value_poly, x0) - integral) / integral * 100.0)
        average = float(np.mean(errors)) if errors else None
        summary.degrees.append(
            DegreeSweepSummary(degree=d, runs=sweep.count, unstable=unstable, average_rel_err_pct=average)
        )
        logger.info("Sweep degree %d: %d/%d unstable, average relative error %s", d, unstable, sweep.count, average)
    return summary
