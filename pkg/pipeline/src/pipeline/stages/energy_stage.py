"""Energy coefficient stage."""

from __future__ import annotations

import logging

from daekron.errors import ValidationFailure
from daekron.schemas.reports import EnergyKind, EnergyMethod
from daekron.services.solver_settings import SolverSettings
from energy.dae_reduction import StokesDaeSystem, reduce_system
from energy.energy_coeffs import compute_energy
from energy.monolithic_sparse import compute_future_energy_monolithic
from energy.poly_algebra import EnergyPolynomial

logger = logging.getLogger(__name__)


def run_energy_stage(
    system: StokesDaeSystem,
    kind: EnergyKind,
    eta: float,
    degree: int,
    method: EnergyMethod,
    settings: SolverSettings,
) -> EnergyPolynomial:
    if method is EnergyMethod.MONOLITHIC:
        if kind is not EnergyKind.FUTURE:
            raise ValidationFailure("the monolithic method computes future energies only; use --method projected")
        poly, _ = compute_future_energy_monolithic(
            system, eta, degree, settings.riccati, settings.monolithic, settings.kway
        )
    else:
        poly = compute_energy(reduce_system(system), kind, eta, degree, settings.riccati, settings.kway)
    for key, value in sorted(poly.diagnostics.items()):
        logger.info("  %-30s %.3e", key, value)
    return poly
