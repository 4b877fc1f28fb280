"""Brute-force rank and identity checks of the bordered Kronecker systems."""

from __future__ import annotations

import logging

from daekron.schemas.reports import RankIdentityReport
from energy.benchmarks import random_stokes_system
from energy.monolithic_sparse import counting_identity_holds, rank_identities_check

logger = logging.getLogger(__name__)


def counting_identity_failures(max_n1: int = 6, max_k: int = 5) -> list[tuple[int, int, int]]:
    """Every ``(n1, r2, k)`` with ``1 <= r2 <= n1 <= max_n1`` and ``k <= max_k`` where the identity fails."""
    return [
        (n1, r2, k)
        for n1 in range(1, max_n1 + 1)
        for r2 in range(1, n1 + 1)
        for k in range(1, max_k + 1)
        if not counting_identity_holds(n1, r2, k)
    ]


def run_selfcheck_stage(max_n1: int = 5, max_k: int = 3, seed: int = 0) -> list[RankIdentityReport]:
    reports = []
    for n1 in range(2, max_n1 + 1):
        for n2 in range(1, n1):
            for k in range(1, max_k + 1):
                system = random_stokes_system(n1, n2, seed=seed + 97 * n1 + n2)
                report = rank_identities_check(n1, n2, k, seed=seed, system=system)
                if not report.passed:
                    logger.warning("Rank identities fail for n1=%d, n2=%d, k=%d: %s", n1, n2, k, report)
                reports.append(report)
    logger.info("Self-check: %d/%d cases pass", sum(r.passed for r in reports), len(reports))
    return reports
