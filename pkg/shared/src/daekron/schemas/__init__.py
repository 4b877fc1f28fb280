"""Pydantic schemas for daekron documents and reports."""

from daekron.schemas.documents import (
    SCHEMA_VERSION,
    CoefficientBlock,
    CooMatrix,
    DenseMatrix,
    EnergyDocument,
    MatrixBlock,
    QuadraticTriplets,
    ReducedDocument,
    RunDocument,
    SystemDimensions,
    SystemDocument,
    SystemMetadata,
)
from daekron.schemas.reports import (
    ComparisonRow,
    DegreeSweepSummary,
    EnergyKind,
    EnergyMethod,
    HjbResidualReport,
    RankIdentityReport,
    SweepSummary,
    ValidationCheck,
    ValidationReport,
)

__all__ = [
    "SCHEMA_VERSION",
    "CoefficientBlock",
    "ComparisonRow",
    "CooMatrix",
    "DegreeSweepSummary",
    "DenseMatrix",
    "EnergyDocument",
    "EnergyKind",
    "EnergyMethod",
    "HjbResidualReport",
    "MatrixBlock",
    "QuadraticTriplets",
    "RankIdentityReport",
    "ReducedDocument",
    "RunDocument",
    "SweepSummary",
    "SystemDimensions",
    "SystemDocument",
    "SystemMetadata",
    "ValidationCheck",
    "ValidationReport",
]
