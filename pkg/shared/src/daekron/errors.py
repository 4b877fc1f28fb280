"""Exception hierarchy shared by the numerical core and the CLI.

Validation failures map to CLI exit status 1, numerical failures to 2.
"""

from __future__ import annotations

from typing import Any


class DaekronError(Exception):
    """Base class for all daekron errors."""


class ValidationFailure(DaekronError, ValueError):
    """Input data violates a structural or class condition."""

    def __init__(self, message: str, report: Any | None = None) -> None:
        super().__init__(message)
        self.report = report


class DimensionError(ValidationFailure):
    """Array shapes disagree with the declared dimensions."""


class NumericalFailure(DaekronError, RuntimeError):
    """A numerical method could not deliver a result within its contract."""


class NoStabilizingSolutionError(NumericalFailure):
    """The Hamiltonian pencil has no stabilizing invariant subspace."""


class ResonantSpectrumError(NumericalFailure):
    """A Lyapunov-type operator is singular because eigenvalue sums vanish."""


class ConditioningError(NumericalFailure):
    """A factorization or Schur complement is too ill-conditioned to trust."""


class IterationLimitError(NumericalFailure):
    """An iterative refinement stopped before reaching its tolerance."""


class SingularSystemError(NumericalFailure):
    """A bordered linear system turned out to be rank deficient."""

    def __init__(self, message: str, rank: int | None = None, expected_rank: int | None = None) -> None:
        super().__init__(message)
        self.rank = rank
        self.expected_rank = expected_rank
