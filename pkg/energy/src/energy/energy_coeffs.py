"""Past and future energy coefficients by degree matching in the HJB equation.

Both energies solve ``0 = min_u H(x, u)`` with

    H = p^T (A x + N (x (x) x) + (B + G(x)) u + S (u (x) u)) + sigma/2 |C x|^2 + |u|^2 / (2 rho)

(``rho = eta, sigma = 1`` for the future energy and ``rho = -1, sigma = -eta``
for the past one). Order two is a Riccati equation; every higher order ``k``
solves ``L_k(F^T) w_k = -2 c_k`` with the closed-loop matrix
``F = A - rho B B^T W_2`` and ``c_k`` collecting the lower-order terms.
"""

from __future__ import annotations

import logging

import numpy as np
from daekron.errors import DimensionError
from daekron.schemas.reports import EnergyKind, HjbResidualReport
from daekron.services.solver_settings import KWaySettings, RiccatiSettings

from energy.dae_reduction import QuadraticControlSystem, ReducedOdeSystem
from energy.kron_ops import symmetrize_coeff
from energy.lin_solvers import KWaySolver, solve_riccati_future, solve_riccati_past
from energy.poly_algebra import (
    EnergyPolynomial,
    control_coefficients,
    hamiltonian_weights,
    hjb_known_part,
)

logger = logging.getLogger(__name__)

_RICCATI = RiccatiSettings()
_KWAY = KWaySettings()

DEFAULT_LADDER = (1e-1, 3e-2, 1e-2, 3e-3)

SystemLike = ReducedOdeSystem | QuadraticControlSystem


def as_dynamics(system: SystemLike) -> QuadraticControlSystem:
    """The mass-normalized dynamics of a reduced system."""
    if isinstance(system, ReducedOdeSystem):
        return system.normalized
    return system


def compute_energy(
    system: SystemLike,
    kind: EnergyKind,
    eta: float,
    degree: int,
    riccati: RiccatiSettings = _RICCATI,
    kway: KWaySettings = _KWAY,
) -> EnergyPolynomial:
    """Energy polynomial of ``kind`` with orders ``2..degree``."""
    if degree < 2:
        raise ValueError(f"energy degree must be >= 2, got {degree}")
    dyn = as_dynamics(system)
    n = dyn.n
    rho, _ = hamiltonian_weights(kind, eta)
    logger.info("Computing %s energy: n=%d, m=%d, eta=%g, degree=%d", kind.value, n, dyn.m, eta, degree)

    if kind is EnergyKind.FUTURE:
        sol = solve_riccati_future(dyn.A, dyn.B, dyn.C, eta=eta, settings=riccati)
    else:
        sol = solve_riccati_past(dyn.A, dyn.B, dyn.C, eta=eta, settings=riccati)
    W2 = 0.5 * (sol.W + sol.W.T)
    coeffs = {2: W2.ravel()}
    diagnostics = {
        "riccati_residual": sol.residual_norm,
        "closed_loop_abscissa": sol.closed_loop_abscissa,
        "newton_steps": float(sol.newton_steps),
    }
    if degree > 2:
        F = dyn.A - rho * dyn.B @ dyn.B.T @ W2
        solver = KWaySolver(F, singular_tol=kway.singular_tol)
        gradients = {1: W2}
        for k in range(3, degree + 1):
            controls = control_coefficients(dyn, gradients, rho, k - 2)
            rhs = -2.0 * symmetrize_coeff(hjb_known_part(dyn, gradients, controls, k, rho), n, k)
            w = symmetrize_coeff(solver.solve(k, rhs), n, k)
            residual = solver.residual_norm(k, w, rhs)
            logger.debug("order %d: |rhs| = %.3e, k-way residual %.3e", k, np.linalg.norm(rhs), residual)
            diagnostics[f"kway_residual_{k}"] = residual
            coeffs[k] = w
            gradients[k - 1] = 0.5 * k * w.reshape(n, n ** (k - 1))
    return EnergyPolynomial(kind=kind, eta=float(eta), n=n, coeffs=coeffs, diagnostics=diagnostics)


def compute_future_energy(
    reduced: SystemLike,
    eta: float,
    degree: int,
    riccati: RiccatiSettings = _RICCATI,
    kway: KWaySettings = _KWAY,
) -> EnergyPolynomial:
    """Future (observability-type) energy; ``eta = 0`` gives the observability energy."""
    return compute_energy(reduced, EnergyKind.FUTURE, eta, degree, riccati, kway)


def compute_past_energy(
    reduced: SystemLike,
    eta: float,
    degree: int,
    riccati: RiccatiSettings = _RICCATI,
    kway: KWaySettings = _KWAY,
) -> EnergyPolynomial:
    """Past (controllability-type) energy."""
    return compute_energy(reduced, EnergyKind.PAST, eta, degree, riccati, kway)


def optimal_input(poly: EnergyPolynomial, system: SystemLike, x: np.ndarray) -> np.ndarray:
    """Pointwise minimizer of the Hamiltonian for the polynomial gradient at ``x``."""
    dyn = as_dynamics(system)
    rho, _ = hamiltonian_weights(poly.kind, poly.eta)
    if rho == 0.0:
        return np.zeros(dyn.m)
    x = np.asarray(x, dtype=float).ravel()
    p = poly.gradient(x)
    assert dyn.S is not None
    M = np.einsum("i,ilk->lk", p, dyn.S.reshape(dyn.n, dyn.m, dyn.m))
    lhs = np.eye(dyn.m) / rho + M + M.T
    return np.linalg.solve(lhs, -dyn.input_matrix(x).T @ p)


def hjb_residual(poly: EnergyPolynomial, system: SystemLike, x: np.ndarray) -> float:
    """Pointwise HJB residual ``min_u H(x, u)`` with the polynomial gradient substituted."""
    dyn = as_dynamics(system)
    if dyn.n != poly.n:
        raise DimensionError(f"energy has dimension {poly.n}, system has {dyn.n}")
    rho, sigma = hamiltonian_weights(poly.kind, poly.eta)
    x = np.asarray(x, dtype=float).ravel()
    p = poly.gradient(x)
    y = dyn.output(x)
    value = float(p @ dyn.drift(x)) + 0.5 * sigma * float(y @ y)
    if rho != 0.0:
        u = optimal_input(poly, dyn, x)
        value += float(p @ (dyn.vector_field(x, u) - dyn.drift(x))) + float(u @ u) / (2.0 * rho)
    return value


def hjb_residual_ladder(
    poly: EnergyPolynomial,
    system: SystemLike,
    directions: np.ndarray | None = None,
    eps: tuple[float, ...] | list[float] = DEFAULT_LADDER,
    count: int = 8,
    seed: int = 0,
) -> HjbResidualReport:
    """Residual ratios ``|residual(eps x)| / eps^(degree+1)`` along a geometric ladder.

    Without explicit ``directions``, ``count`` random unit directions are drawn.
    """
    if directions is None:
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((count, poly.n))
        directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    order = poly.degree + 1
    ratios = [[abs(hjb_residual(poly, system, e * d)) / e**order for e in eps] for d in directions]
    report = HjbResidualReport(kind=poly.kind, degree=poly.degree, eps=list(eps), ratios=ratios)
    logger.debug("HJB ladder for degree %d: max ratios %s", poly.degree, report.max_ratios)
    return report
