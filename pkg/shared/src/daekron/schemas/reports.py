"""Pydantic schemas for validation, residual, and comparison reports."""

from __future__ import annotations

from enum import Enum

from pydantic import BaseModel, Field


class EnergyKind(str, Enum):
    """Which energy function a coefficient set approximates."""

    PAST = "past"
    FUTURE = "future"


class EnergyMethod(str, Enum):
    """How the higher-order coefficients are computed."""

    PROJECTED = "projected"
    MONOLITHIC = "monolithic"


class ValidationCheck(BaseModel):
    """One structural condition of a Stokes-type system."""

    name: str
    passed: bool
    margin: float | None = None
    detail: str = ""


class ValidationReport(BaseModel):
    """Outcome of validating a Stokes-type DAE."""

    system_name: str = ""
    checks: list[ValidationCheck] = Field(default_factory=list)

    @property
    def valid(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> list[ValidationCheck]:
        return [check for check in self.checks if not check.passed]

    def summary(self) -> str:
        if self.valid:
            return f"{self.system_name or 'system'}: valid"
        reasons = "; ".join(f"{c.name}: {c.detail}" for c in self.failures)
        return f"{self.system_name or 'system'}: invalid ({reasons})"


class HjbResidualReport(BaseModel):
    """Scale-ladder evidence for the residual order of a truncated energy."""

    kind: EnergyKind
    degree: int
    eps: list[float]
    # ratios[i][j] = |residual(eps[j] * direction_i)| / eps[j] ** (degree + 1)
    ratios: list[list[float]]
    growth_limit: float = 5.0

    @property
    def max_ratios(self) -> list[float]:
        if not self.ratios:
            return []
        return [max(row[j] for row in self.ratios) for j in range(len(self.eps))]

    @property
    def bounded(self) -> bool:
        """True when the ratios do not grow along the ladder."""
        peaks = self.max_ratios
        if len(peaks) < 2:
            return True
        reference = max(peaks[:2])
        return all(p <= self.growth_limit * reference + 1e-8 for p in peaks[2:])


class RankIdentityReport(BaseModel):
    """Brute-force checks of the Kronecker block-rank identities."""

    n1: int
    n2: int
    k: int
    r2: int
    expected_rank: int
    rank_full: int
    rank_selected: int
    selected_columns: int
    counting_identity: bool
    projector_product_error: float
    bordered_side: int | None = None
    bordered_rank: int | None = None
    tolerance: float = 1e-10

    @property
    def passed(self) -> bool:
        ok = (
            self.rank_full == self.expected_rank
            and self.rank_selected == self.expected_rank
            and self.selected_columns == self.expected_rank
            and self.counting_identity
            and self.projector_product_error <= self.tolerance
        )
        if self.bordered_rank is not None:
            ok = ok and self.bordered_rank == self.bordered_side
        return ok


class ComparisonRow(BaseModel):
    """Value-function prediction against the integrated closed-loop cost."""

    degree: int
    value: float
    integral: float | None = None
    abs_err: float | None = None
    rel_err_pct: float | None = None
    diverged: bool = False


class DegreeSweepSummary(BaseModel):
    """Stability and error statistics of one feedback degree over a sweep."""

    degree: int
    runs: int = 0
    unstable: int = 0
    average_rel_err_pct: float | None = None


class SweepSummary(BaseModel):
    """Aggregated results of a random initial-condition sweep."""

    count: int
    seed: int
    low: float
    high: float
    horizon: float
    degrees: list[DegreeSweepSummary] = Field(default_factory=list)
