"""System reduction stage."""

from __future__ import annotations

import logging

from energy.dae_reduction import ReducedOdeSystem, StokesDaeSystem, reduce_system

logger = logging.getLogger(__name__)


def run_reduce_stage(system: StokesDaeSystem) -> ReducedOdeSystem:
    reduced = reduce_system(system)
    for key, value in sorted(reduced.diagnostics.items()):
        logger.info("  %-34s %.3e", key, value)
    return reduced
