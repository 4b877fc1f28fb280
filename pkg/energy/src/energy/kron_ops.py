"""Kronecker-product primitives.

Conventions used throughout the package:

* vec is column-major, so ``vec(B X A^T) = (A (x) B) vec(X)``.
* Kronecker ordering follows ``numpy.kron``: in ``x (x) y`` the index of ``x``
  varies slowest. A vector of length ``n**k`` is therefore the C-order ravel of
  a k-way tensor whose axis 0 belongs to the first Kronecker factor.
* Powers ``x^(k)`` are plain 1-D arrays of length ``n**k``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
import scipy.sparse as sp
from daekron.errors import DimensionError

logger = logging.getLogger(__name__)

DENSE_ASSEMBLY_LIMIT = 20_000_000


@dataclass(frozen=True)
class Eye:
    """Identity factor of size ``n`` that is never materialized."""

    n: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def T(self) -> Eye:
        return self


Factor = Any  # numpy array, scipy sparse matrix, or Eye


def _shape(factor: Factor) -> tuple[int, int]:
    rows, cols = factor.shape
    return int(rows), int(cols)


def _nnz(factor: Factor) -> int:
    if isinstance(factor, Eye):
        return factor.n
    if sp.issparse(factor):
        return int(factor.nnz)
    return int(np.count_nonzero(factor))


def _mode_product(tensor: np.ndarray, factor: Factor, axis: int) -> np.ndarray:
    if isinstance(factor, Eye):
        return tensor
    moved = np.moveaxis(tensor, axis, 0)
    lead = moved.shape
    out = np.asarray(factor @ moved.reshape(lead[0], -1))
    out = out.reshape((out.shape[0],) + lead[1:])
    return np.moveaxis(out, 0, axis)


def kron_power(x: Sequence[float] | np.ndarray, k: int) -> np.ndarray:
    """Return ``x (x) ... (x) x`` with ``k`` factors."""
    if k < 1:
        raise ValueError(f"Kronecker power order must be >= 1, got {k}")
    base = np.asarray(x, dtype=float).ravel()
    out = base
    for _ in range(k - 1):
        out = np.kron(out, base)
    return out


def kron_apply(factors: Sequence[Factor], v: np.ndarray) -> np.ndarray:
    """Apply ``(A_1 (x) ... (x) A_k)`` to ``v`` by successive mode products.

    ``v`` may carry one trailing batch axis, in which case every column is
    transformed independently.
    """
    v = np.asarray(v, dtype=float)
    cols = [_shape(f)[1] for f in factors]
    expected = math.prod(cols)
    batch = v.shape[1:] if v.ndim == 2 else ()
    if v.shape[0] != expected or v.ndim > 2:
        raise DimensionError(f"kron_apply: factors expect length {expected}, got array of shape {v.shape}")
    tensor = v.reshape(tuple(cols) + batch)
    for axis, factor in enumerate(factors):
        tensor = _mode_product(tensor, factor, axis)
    rows = math.prod(_shape(f)[0] for f in factors)
    return tensor.reshape((rows,) + batch)


def _assemble(factors: Sequence[Factor], sparse: bool) -> Any:
    out: Any = None
    for factor in factors:
        if sparse:
            mat = sp.identity(factor.n, format="csr") if isinstance(factor, Eye) else sp.csr_matrix(factor)
            out = mat if out is None else sp.kron(out, mat, format="csr")
        else:
            mat = np.eye(factor.n) if isinstance(factor, Eye) else _dense(factor)
            out = mat if out is None else np.kron(out, mat)
    return out


def _dense(factor: Factor) -> np.ndarray:
    if sp.issparse(factor):
        return np.asarray(factor.toarray(), dtype=float)
    return np.asarray(factor, dtype=float)


def _check_budget(entries: int, limit: int, what: str) -> None:
    if entries > limit:
        raise ValueError(f"refusing to assemble {what}: {entries} entries exceed the limit {limit}")


@dataclass(frozen=True)
class KWayLyapunovOperator:
    """The generalized k-way Lyapunov matrix ``sum_i E^(i-1) (x) M (x) E^(k-i)``.

    ``M`` is q x n and ``E`` is n x n (``None`` stands for the identity). The
    operator is kept in factor form; :meth:`assemble` materializes it.
    """

    M: Factor
    E: Factor | None
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k-way Lyapunov order must be >= 1, got {self.k}")
        if self.E is not None:
            e_rows, e_cols = _shape(self.E)
            if e_rows != e_cols or e_cols != _shape(self.M)[1]:
                raise DimensionError(f"E must be {self.n}x{self.n}, got {e_rows}x{e_cols}")

    @property
    def q(self) -> int:
        return _shape(self.M)[0]

    @property
    def n(self) -> int:
        return _shape(self.M)[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n ** (self.k - 1) * self.q, self.n**self.k)

    def _e_factor(self) -> Factor:
        return Eye(self.n) if self.E is None else self.E

    def terms(self) -> list[list[Factor]]:
        e = self._e_factor()
        return [[e] * i + [self.M] + [e] * (self.k - i - 1) for i in range(self.k)]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape[0] if np.ndim(v) == 1 else (self.shape[0], np.shape(v)[1]))
        for term in self.terms():
            out += kron_apply(term, v)
        return out

    def transpose(self) -> KWayLyapunovOperator:
        """Only meaningful for square ``M`` (q = n)."""
        if self.q != self.n:
            raise DimensionError("transpose of a rectangular k-way operator is not a k-way operator")
        return KWayLyapunovOperator(self.M.T, None if self.E is None else self.E.T, self.k)

    def assemble(self, sparse: bool = False, limit: int = DENSE_ASSEMBLY_LIMIT) -> Any:
        rows, cols = self.shape
        if sparse:
            _check_budget(self.k * _nnz(self.M) * _nnz(self._e_factor()) ** (self.k - 1), limit, "k-way operator")
        else:
            _check_budget(rows * cols, limit, "k-way operator")
        total: Any = None
        for term in self.terms():
            block = _assemble(term, sparse)
            total = block if total is None else total + block
        return total


@dataclass(frozen=True)
class BlockKroneckerMatrix:
    """Row of blocks ``[B^(i-1) (x) A (x) I^(k-i)]_{i=1..k}``.

    ``A`` is n1 x n2 and ``B`` is n1 x r; ``B=None`` means the identity.
    """

    A: Factor
    B: Factor | None
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"block Kronecker order must be >= 1, got {self.k}")
        if self.B is not None and _shape(self.B)[0] != self.n1:
            raise DimensionError(f"B must have {self.n1} rows, got {_shape(self.B)[0]}")

    @property
    def n1(self) -> int:
        return _shape(self.A)[0]

    def _b_factor(self) -> Factor:
        return Eye(self.n1) if self.B is None else self.B

    def block_factors(self, i: int) -> list[Factor]:
        """Factors of block ``i`` (1-based)."""
        if not 1 <= i <= self.k:
            raise IndexError(f"block index {i} outside 1..{self.k}")
        return [self._b_factor()] * (i - 1) + [self.A] + [Eye(self.n1)] * (self.k - i)

    @property
    def blocks(self) -> list[str]:
        labels = []
        for i in range(1, self.k + 1):
            parts = ["B"] * (i - 1) + ["A"] + ["I"] * (self.k - i)
            labels.append(" (x) ".join(parts))
        return labels

    def block_cols(self, i: int) -> int:
        return math.prod(_shape(f)[1] for f in self.block_factors(i))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1**self.k, sum(self.block_cols(i) for i in range(1, self.k + 1)))

    def _splits(self) -> list[int]:
        return list(np.cumsum([self.block_cols(i) for i in range(1, self.k)]))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        pieces = np.split(np.asarray(v, dtype=float), self._splits())
        out = np.zeros(self.shape[0])
        for i, piece in enumerate(pieces, start=1):
            out += kron_apply(self.block_factors(i), piece)
        return out

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        parts = [kron_apply([f.T for f in self.block_factors(i)], y) for i in range(1, self.k + 1)]
        return np.concatenate(parts)

    def assemble(self, sparse: bool = True, limit: int = DENSE_ASSEMBLY_LIMIT) -> Any:
        rows, cols = self.shape
        if not sparse:
            _check_budget(rows * cols, limit, "block Kronecker matrix")
        blocks = [_assemble(self.block_factors(i), sparse) for i in range(1, self.k + 1)]
        if sparse:
            return sp.hstack(blocks, format="csr")
        return np.hstack(blocks)


@lru_cache(maxsize=32)
def _orbits(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Orbit key of every multi-index under index permutations, and orbit sizes."""
    grid = np.indices((n,) * k).reshape(k, -1)
    key = np.ravel_multi_index(np.sort(grid, axis=0), (n,) * k)
    counts = np.bincount(key, minlength=n**k)
    return key, counts


def symmetrize_coeff(v: np.ndarray, n: int, k: int) -> np.ndarray:
    """Average ``v`` over all permutations of its ``k`` Kronecker index positions."""
    v = np.asarray(v, dtype=float).ravel()
    if n < 1 or k < 1 or v.size != n**k:
        raise DimensionError(f"coefficient of length {v.size} is not an order-{k} tensor in dimension {n}")
    if k == 1:
        return v.copy()
    key, counts = _orbits(n, k)
    sums = np.bincount(key, weights=v, minlength=n**k)
    return sums[key] / counts[key]


def unfold(v: np.ndarray, n: int, k: int) -> np.ndarray:
    """Mode-1 unfolding ``W`` (n x n^(k-1)) of a symmetric coefficient, so ``W x^(k-1)`` is a gradient term."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n**k:
        raise DimensionError(f"coefficient of length {v.size} is not an order-{k} tensor in dimension {n}")
    return v.reshape(n, n ** (k - 1))


def contract_power(v: np.ndarray, x: np.ndarray, times: int) -> np.ndarray:
    """Contract the trailing ``times`` Kronecker slots of ``v`` with ``x``, one mode at a time."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    out = np.asarray(v, dtype=float)
    for _ in range(times):
        out = out.reshape(-1, n) @ x
    return out


def pair_vec(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Coefficient ``c`` with ``c^T x^(a+b) = (L x^(a))^T (R x^(b))`` for L (r x n^a), R (r x n^b)."""
    return np.asarray(left.T @ right).reshape(-1, order="F")


def build_Lk(M: Factor, E: Factor | None, k: int) -> KWayLyapunovOperator:
    """``L_k^E(M)`` in factor form; ``E=None`` gives ``L_k(M)``."""
    return KWayLyapunovOperator(M, E, k)


def build_Mk(A: Factor, B: Factor | None, k: int) -> BlockKroneckerMatrix:
    """``M_k^B(A)``; ``B=None`` uses the identity."""
    return BlockKroneckerMatrix(A, B, k)
