"""Pydantic schemas for the JSON documents exchanged by the CLI.

Dense matrices are stored row-major. Sparse matrices use coordinate triplets.
The quadratic coefficient N (n1 x n1^2) is stored as (i, j, k, value) entries,
where j and k index the two Kronecker slots of x (x)-product columns.
"""

from __future__ import annotations

from typing import Annotated, Literal

from pydantic import BaseModel, Field, model_validator

from daekron.schemas.reports import EnergyKind, EnergyMethod

SCHEMA_VERSION = 1


class DenseMatrix(BaseModel):
    format: Literal["dense"] = "dense"
    rows: int = Field(ge=0)
    cols: int = Field(ge=0)
    data: list[list[float]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_shape(self) -> DenseMatrix:
        if len(self.data) != self.rows:
            raise ValueError(f"dense block declares {self.rows} rows but has {len(self.data)}")
        for r, row in enumerate(self.data):
            if len(row) != self.cols:
                raise ValueError(f"dense block row {r} has {len(row)} entries, expected {self.cols}")
        return self


class CooMatrix(BaseModel):
    format: Literal["coo"] = "coo"
    rows: int = Field(ge=0)
    cols: int = Field(ge=0)
    entries: list[tuple[int, int, float]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_indices(self) -> CooMatrix:
        for i, j, _ in self.entries:
            if not (0 <= i < self.rows and 0 <= j < self.cols):
                raise ValueError(f"coordinate ({i}, {j}) outside a {self.rows}x{self.cols} block")
        return self


MatrixBlock = Annotated[DenseMatrix | CooMatrix, Field(discriminator="format")]


class QuadraticTriplets(BaseModel):
    """Sparse storage of N with one entry per (row, slot-1 index, slot-2 index)."""

    n: int = Field(ge=0)
    entries: list[tuple[int, int, int, float]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_indices(self) -> QuadraticTriplets:
        for i, j, k, _ in self.entries:
            if not (0 <= i < self.n and 0 <= j < self.n and 0 <= k < self.n):
                raise ValueError(f"quadratic entry ({i}, {j}, {k}) outside dimension {self.n}")
        return self


class SystemDimensions(BaseModel):
    n1: int = Field(ge=1)
    n2: int = Field(ge=0)
    m: int = Field(ge=1)
    p: int = Field(ge=1)


class SystemMetadata(BaseModel):
    name: str = ""
    eta: float | None = None
    initial_state: list[float] | None = None


_BLOCK_SHAPES: dict[str, tuple[str, str]] = {
    "E11": ("n1", "n1"),
    "A11": ("n1", "n1"),
    "A12": ("n1", "n2"),
    "B1": ("n1", "m"),
    "B2": ("n2", "m"),
    "C1": ("p", "n1"),
}


class SystemDocument(BaseModel):
    """A Stokes-type quadratic DAE E11 x1' = A11 x1 + A12 x2 + N(x1 (x) x1) + B1 u, 0 = A12' x1 + B2 u."""

    schema_version: int = SCHEMA_VERSION
    dimensions: SystemDimensions
    matrices: dict[str, MatrixBlock]
    N: QuadraticTriplets
    metadata: SystemMetadata = Field(default_factory=SystemMetadata)

    @model_validator(mode="after")
    def _check_dimensions(self) -> SystemDocument:
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        dims = self.dimensions.model_dump()
        missing = sorted(set(_BLOCK_SHAPES) - set(self.matrices))
        if missing:
            raise ValueError(f"missing matrix blocks: {', '.join(missing)}")
        for name, (row_dim, col_dim) in _BLOCK_SHAPES.items():
            block = self.matrices[name]
            expected = (dims[row_dim], dims[col_dim])
            if (block.rows, block.cols) != expected:
                raise ValueError(f"{name} is {block.rows}x{block.cols}, expected {expected[0]}x{expected[1]}")
        if self.N.n != self.dimensions.n1:
            raise ValueError(f"N declares dimension {self.N.n}, expected n1={self.dimensions.n1}")
        return self


class ReducedDocument(BaseModel):
    """The constraint-free reduced ODE together with its projector factors."""

    schema_version: int = SCHEMA_VERSION
    source_name: str = ""
    n: int = Field(ge=0)
    m: int = Field(ge=1)
    matrices: dict[str, DenseMatrix]
    diagnostics: dict[str, float] = Field(default_factory=dict)


class CoefficientBlock(BaseModel):
    order: int = Field(ge=2)
    data: list[float]


class EnergyDocument(BaseModel):
    """Symmetrized energy-function coefficients of one kind and degree."""

    schema_version: int = SCHEMA_VERSION
    kind: EnergyKind
    method: EnergyMethod = EnergyMethod.PROJECTED
    eta: float
    degree: int = Field(ge=2)
    n: int = Field(ge=0)
    coefficients: list[CoefficientBlock]
    diagnostics: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_orders(self) -> EnergyDocument:
        orders = [block.order for block in self.coefficients]
        if orders != list(range(2, self.degree + 1)):
            raise ValueError(f"coefficient orders {orders} do not cover 2..{self.degree}")
        for block in self.coefficients:
            if len(block.data) != self.n**block.order:
                raise ValueError(f"order-{block.order} coefficient has {len(block.data)} entries, expected n^k")
        return self


class RunDocument(BaseModel):
    """One closed-loop simulation: summary plus the sampled trajectory."""

    schema_version: int = SCHEMA_VERSION
    degree: int = Field(ge=1)
    eta: float
    horizon: float = Field(gt=0)
    initial_state: list[float]
    cost: float | None = None
    diverged: bool = False
    terminated_early: bool = False
    final_time: float
    final_norm: float | None = None
    max_constraint_residual: float | None = None
    max_momentum_residual: float | None = None
    t: list[float] = Field(default_factory=list)
    x_d: list[list[float]] = Field(default_factory=list)
    u: list[list[float]] = Field(default_factory=list)
