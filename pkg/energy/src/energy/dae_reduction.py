"""Stokes-type DAE validation, projector construction and reduction to an ODE.

A system of the form::

    E11 x1' = A11 x1 + A12 x2 + N (x1 (x) x1) + B1 u
          0 = A12^T x1 + B2 u
          y = C1 x1

is reduced by writing ``x1 = Theta_r x_d - s u`` with ``Theta_r`` an
orthonormal basis of ``null(A12^T)``. The algebraic variable ``x2`` is
recovered afterwards from the momentum equation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from daekron.errors import ConditioningError, DimensionError, ValidationFailure
from daekron.schemas.reports import ValidationCheck, ValidationReport
from scipy.linalg import lu_factor, lu_solve, qr, svdvals

from energy.kron_ops import kron_power

logger = logging.getLogger(__name__)

RANK_TOL = 1e-12
SCHUR_COND_LIMIT = 1e12


def _matrix(name: str, value: np.ndarray, rows: int, cols: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim < 2 and arr.size == rows * cols:
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise DimensionError(f"{name} must be {rows}x{cols}, got shape {arr.shape}")
    return arr


def _width(value: np.ndarray, n1: int, axis: int) -> int:
    """Free dimension of a block whose other dimension is ``n1``."""
    arr = np.asarray(value)
    if arr.ndim == 2:
        return int(arr.shape[axis])
    return arr.size // n1 if n1 else 0


@dataclass(frozen=True, eq=False)
class StokesDaeSystem:
    """Quadratic descriptor system with saddle-point structure."""

    E11: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    N: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        E11 = np.atleast_2d(np.asarray(self.E11, dtype=float))
        n1 = E11.shape[0]
        if E11.shape != (n1, n1):
            raise DimensionError(f"E11 must be square, got {E11.shape[0]}x{E11.shape[1]}")
        n2 = _width(self.A12, n1, 1)
        m = _width(self.B1, n1, 1)
        p = _width(self.C1, n1, 0)
        object.__setattr__(self, "E11", E11)
        object.__setattr__(self, "A11", _matrix("A11", self.A11, n1, n1))
        object.__setattr__(self, "A12", _matrix("A12", self.A12, n1, n2))
        object.__setattr__(self, "N", _matrix("N", self.N, n1, n1 * n1))
        object.__setattr__(self, "B1", _matrix("B1", self.B1, n1, m))
        object.__setattr__(self, "B2", _matrix("B2", self.B2, n2, m))
        object.__setattr__(self, "C1", _matrix("C1", self.C1, p, n1))

    @property
    def n1(self) -> int:
        return int(self.E11.shape[0])

    @property
    def n2(self) -> int:
        return int(self.A12.shape[1])

    @property
    def m(self) -> int:
        return int(self.B1.shape[1])

    @property
    def p(self) -> int:
        return int(self.C1.shape[0])

    def constraint_residual(self, x1: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A12.T @ np.asarray(x1, dtype=float) + self.B2 @ np.atleast_1d(np.asarray(u, dtype=float))


@dataclass(frozen=True, eq=False)
class ProjectorPair:
    """Oblique projector ``Pi = Theta_l Theta_r^T`` with ``Theta_l^T Theta_r = I``."""

    Pi: np.ndarray
    Theta_l: np.ndarray
    Theta_r: np.ndarray

    def defects(self, A12: np.ndarray) -> dict[str, float]:
        """Frobenius norms of the identities the pair must satisfy."""
        Pi, Tl, Tr = self.Pi, self.Theta_l, self.Theta_r
        r = Tr.shape[1]
        return {
            "idempotence": float(np.linalg.norm(Pi @ Pi - Pi)),
            "annihilation": float(np.linalg.norm(Pi @ A12)),
            "transpose_fixes_basis": float(np.linalg.norm(Pi.T @ Tr - Tr)),
            "factorization": float(np.linalg.norm(Tl @ Tr.T - Pi)),
            "biorthogonality": float(np.linalg.norm(Tl.T @ Tr - np.eye(r))),
        }


class SaddlePointFactors:
    """LU factors of ``E11`` and of the Schur complement ``A12^T E11^-1 A12``.

    All applications of ``E11^-1`` and of the projector go through these
    factors; no inverse is formed.
    """

    def __init__(self, E11: np.ndarray, A12: np.ndarray) -> None:
        self.E11 = np.asarray(E11, dtype=float)
        self.A12 = np.asarray(A12, dtype=float)
        self.n1, self.n2 = self.A12.shape
        self._lu_e = lu_factor(self.E11)
        self.e_inv_a12 = lu_solve(self._lu_e, self.A12) if self.n2 else np.zeros((self.n1, 0))
        schur = self.A12.T @ self.e_inv_a12
        self.schur_condition = float(np.linalg.cond(schur)) if self.n2 else 1.0
        if self.schur_condition > SCHUR_COND_LIMIT:
            raise ConditioningError(
                f"Schur complement A12^T E11^-1 A12 is ill-conditioned: cond = {self.schur_condition:.3e}"
            )
        self._lu_s = lu_factor(schur) if self.n2 else None

    def solve_e(self, rhs: np.ndarray, trans: bool = False) -> np.ndarray:
        return lu_solve(self._lu_e, rhs, trans=1 if trans else 0)

    def solve_schur(self, rhs: np.ndarray, trans: bool = False) -> np.ndarray:
        if self._lu_s is None:
            return np.zeros((0,) + np.shape(rhs)[1:])
        return lu_solve(self._lu_s, rhs, trans=1 if trans else 0)

    def apply_pi(self, v: np.ndarray) -> np.ndarray:
        """``Pi v = v - A12 S^-1 A12^T E11^-1 v``."""
        v = np.asarray(v, dtype=float)
        if not self.n2:
            return v.copy()
        return v - self.A12 @ self.solve_schur(self.A12.T @ self.solve_e(v))

    def apply_pi_t(self, v: np.ndarray) -> np.ndarray:
        """``Pi^T v = v - E11^-T A12 S^-T A12^T v``."""
        v = np.asarray(v, dtype=float)
        if not self.n2:
            return v.copy()
        return v - self.solve_e(self.A12 @ self.solve_schur(self.A12.T @ v, trans=True), trans=True)

    def projector(self) -> np.ndarray:
        return self.apply_pi(np.eye(self.n1))

    def drift(self, B2: np.ndarray) -> np.ndarray:
        """``s = E11^-1 A12 S^-1 B2``, the input-driven part of ``x1`` per unit input."""
        B2 = np.asarray(B2, dtype=float)
        if not self.n2:
            return np.zeros((self.n1, B2.shape[1]))
        return self.e_inv_a12 @ self.solve_schur(B2)


def _rank_margin(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 1.0
    sv = svdvals(matrix)
    return float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0


def validate_stokes_dae(sys: StokesDaeSystem) -> ValidationReport:
    """Check the structural conditions of the Stokes class, each with its margin."""
    checks: list[ValidationCheck] = []
    arrays = {"E11": sys.E11, "A11": sys.A11, "A12": sys.A12, "N": sys.N, "B1": sys.B1, "B2": sys.B2, "C1": sys.C1}
    bad = [name for name, arr in arrays.items() if not np.all(np.isfinite(arr))]
    detail = f"non-finite entries in {', '.join(bad)}" if bad else ""
    checks.append(ValidationCheck(name="finite entries", passed=not bad, detail=detail))
    if bad:
        return ValidationReport(system_name=sys.name, checks=checks)

    e_margin = _rank_margin(sys.E11)
    e_ok = e_margin > RANK_TOL
    checks.append(
        ValidationCheck(
            name="E11 invertible",
            passed=e_ok,
            margin=e_margin,
            detail="" if e_ok else f"singular: sigma_min/sigma_max = {e_margin:.3e}",
        )
    )

    if sys.n2 == 0:
        checks.append(ValidationCheck(name="A12 full column rank", passed=True, margin=None, detail="no constraints"))
        a_ok = True
    elif sys.n2 > sys.n1:
        checks.append(
            ValidationCheck(
                name="A12 full column rank",
                passed=False,
                detail=f"rank deficient: {sys.n2} constraints exceed {sys.n1} states",
            )
        )
        a_ok = False
    else:
        a_margin = _rank_margin(sys.A12)
        a_ok = a_margin > RANK_TOL
        rank = int(np.linalg.matrix_rank(sys.A12))
        checks.append(
            ValidationCheck(
                name="A12 full column rank",
                passed=a_ok,
                margin=a_margin,
                detail="" if a_ok else f"rank deficient: rank {rank} < {sys.n2}",
            )
        )

    if e_ok and a_ok and sys.n2:
        schur = sys.A12.T @ lu_solve(lu_factor(sys.E11), sys.A12)
        s_margin = _rank_margin(schur)
        s_ok = s_margin > RANK_TOL
        checks.append(
            ValidationCheck(
                name="Schur complement invertible",
                passed=s_ok,
                margin=s_margin,
                detail="" if s_ok else f"A12^T E11^-1 A12 singular: sigma_min/sigma_max = {s_margin:.3e}",
            )
        )

    report = ValidationReport(system_name=sys.name, checks=checks)
    logger.debug("Validation of %s: %s", sys.name or "system", report.summary())
    return report


def build_projector(E11: np.ndarray, A12: np.ndarray) -> np.ndarray:
    """``Pi = I - A12 (A12^T E11^-1 A12)^-1 A12^T E11^-1``."""
    return SaddlePointFactors(E11, A12).projector()


def null_space_basis(A12: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ``null(A12^T)`` from a pivoted QR of ``A12``.

    The first nonzero entry of every column is made positive.
    """
    A12 = np.atleast_2d(np.asarray(A12, dtype=float))
    n1, n2 = A12.shape
    if n2 == 0:
        return np.eye(n1)
    Q, R, _ = qr(A12, mode="full", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.count_nonzero(diag > tol * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < n2:
        raise ValidationFailure(f"A12 is rank deficient: rank {rank} < {n2}")
    basis = Q[:, rank:].copy()
    for j in range(basis.shape[1]):
        column = basis[:, j]
        nonzero = np.flatnonzero(np.abs(column) > tol * max(1.0, float(np.max(np.abs(column)))))
        if nonzero.size and column[nonzero[0]] < 0:
            basis[:, j] = -column
    return basis


def _check_basis(basis: np.ndarray, A12: np.ndarray) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    n1, n2 = A12.shape
    if basis.shape != (n1, n1 - n2):
        raise DimensionError(f"null-space basis must be {n1}x{n1 - n2}, got {basis.shape[0]}x{basis.shape[1]}")
    if np.linalg.norm(A12.T @ basis) > 1e-10 or np.linalg.norm(basis.T @ basis - np.eye(n1 - n2)) > 1e-10:
        raise ValidationFailure("supplied basis is not an orthonormal basis of null(A12^T)")
    return basis


def factor_projector(Pi: np.ndarray, A12: np.ndarray, basis: np.ndarray | None = None) -> ProjectorPair:
    """Split ``Pi`` as ``Theta_l Theta_r^T`` with ``Theta_r`` orthonormal and ``Theta_l = Pi Theta_r``."""
    A12 = np.atleast_2d(np.asarray(A12, dtype=float))
    Theta_r = null_space_basis(A12) if basis is None else _check_basis(basis, A12)
    return ProjectorPair(Pi=np.asarray(Pi, dtype=float), Theta_l=Pi @ Theta_r, Theta_r=Theta_r)


@dataclass(frozen=True, eq=False)
class QuadraticControlSystem:
    """``x' = A x + N (x (x) x) + (B + G(x)) u + S (u (x) u)``, ``y = C x``.

    ``G(x) u = Gamma (x (x) u)`` with ``Gamma`` of shape n x (n m), and ``S`` is
    n x m^2. The mass matrix has already been divided out.
    """

    A: np.ndarray
    N: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Gamma: np.ndarray | None = None
    S: np.ndarray | None = None

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        m = B.shape[1]
        object.__setattr__(self, "A", _matrix("A", A, n, n))
        object.__setattr__(self, "N", _matrix("N", self.N, n, n * n))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float).reshape(-1, n))
        gamma = np.zeros((n, n * m)) if self.Gamma is None else self.Gamma
        object.__setattr__(self, "Gamma", _matrix("Gamma", gamma, n, n * m))
        quad = np.zeros((n, m * m)) if self.S is None else self.S
        object.__setattr__(self, "S", _matrix("S", quad, n, m * m))

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    @property
    def m(self) -> int:
        return int(self.B.shape[1])

    @cached_property
    def input_coupled(self) -> bool:
        """True when the input enters beyond the constant matrix ``B``."""
        return bool(np.any(self.Gamma) or np.any(self.S))

    @property
    def gamma_tensor(self) -> np.ndarray:
        assert self.Gamma is not None
        return self.Gamma.reshape(self.n, self.n, self.m)

    def input_matrix(self, x: np.ndarray) -> np.ndarray:
        """``B + G(x)`` as an n x m matrix."""
        x = np.asarray(x, dtype=float)
        return self.B + np.tensordot(self.gamma_tensor, x, axes=([1], [0]))

    def drift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.A @ x + self.N @ kron_power(x, 2)

    def vector_field(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        assert self.S is not None
        return self.drift(x) + self.input_matrix(x) @ u + self.S @ np.kron(u, u)

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.C @ np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class ReducedOdeSystem:
    """Strangeness-free reduced ODE on ``null(A12^T)`` coordinates.

    ``E_d x_d' = A_d x_d + N_d (x_d (x) x_d) + (B_const + G_lin(x_d)) u + s_d (u (x) u)``
    with output ``y = C_d x_d + D_d u``.
    """

    E_d: np.ndarray
    A_d: np.ndarray
    N_d: np.ndarray
    B_const: np.ndarray
    G_left: np.ndarray
    G_right: np.ndarray
    s_d: np.ndarray
    s: np.ndarray
    C_d: np.ndarray
    D_d: np.ndarray
    projectors: ProjectorPair
    name: str = ""
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.A_d.shape[0])

    @property
    def m(self) -> int:
        return int(self.B_const.shape[1])

    @property
    def G_lin(self) -> np.ndarray:
        """Both bilinear factors in ``x (x) u`` ordering."""
        return self.G_left + self.G_right

    @cached_property
    def normalized(self) -> QuadraticControlSystem:
        """The dynamics with ``E_d`` divided out."""
        lu = lu_factor(self.E_d)
        return QuadraticControlSystem(
            A=lu_solve(lu, self.A_d),
            N=lu_solve(lu, self.N_d),
            B=lu_solve(lu, self.B_const),
            C=self.C_d,
            Gamma=lu_solve(lu, self.G_lin),
            S=lu_solve(lu, self.s_d),
        )


def reduce_system(sys: StokesDaeSystem, basis: np.ndarray | None = None) -> ReducedOdeSystem:
    """Project the DAE onto ``null(A12^T)`` and eliminate the algebraic variable."""
    report = validate_stokes_dae(sys)
    if not report.valid:
        raise ValidationFailure(report.summary(), report)
    logger.info("Reducing %s: n1=%d, n2=%d, m=%d", sys.name or "system", sys.n1, sys.n2, sys.m)

    factors = SaddlePointFactors(sys.E11, sys.A12)
    pair = factor_projector(factors.projector(), sys.A12, basis)
    T = pair.Theta_r
    n, m = T.shape[1], sys.m
    s = factors.drift(sys.B2)

    NT = sys.N @ np.kron(T, T)
    # x1 = T x_d - s u, so the cross terms of N pick up a minus sign
    left = -T.T @ (sys.N @ np.kron(T, s))
    right = -T.T @ (sys.N @ np.kron(s, T))
    right = right.reshape(n, m, n).transpose(0, 2, 1).reshape(n, n * m)

    E_d = T.T @ sys.E11 @ T
    reduced = ReducedOdeSystem(
        E_d=E_d,
        A_d=T.T @ sys.A11 @ T,
        N_d=T.T @ NT,
        B_const=T.T @ (sys.B1 - sys.A11 @ s),
        G_left=left,
        G_right=right,
        s_d=T.T @ (sys.N @ np.kron(s, s)),
        s=s,
        C_d=sys.C1 @ T,
        D_d=-sys.C1 @ s,
        projectors=pair,
        name=sys.name,
        diagnostics={
            "cond_E11": float(np.linalg.cond(sys.E11)),
            "cond_schur": factors.schur_condition,
            "cond_E_d": float(np.linalg.cond(E_d)) if n else 1.0,
            **{f"projector_{key}": value for key, value in pair.defects(sys.A12).items()},
        },
    )
    logger.info("Reduced %s to %d states", sys.name or "system", n)
    return reduced


def lift_state(reduced: ReducedOdeSystem, x_d: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``x1 = Theta_r x_d - s u``."""
    x_d = np.asarray(x_d, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x_d.shape[0] != reduced.n or u.shape[0] != reduced.m:
        raise DimensionError(f"expected x_d of length {reduced.n} and u of length {reduced.m}")
    return reduced.projectors.Theta_r @ x_d - reduced.s @ u


def lift_velocity(reduced: ReducedOdeSystem, x_d_dot: np.ndarray, u_dot: np.ndarray) -> np.ndarray:
    """``x1' = Theta_r x_d' - s u'``."""
    return lift_state(reduced, x_d_dot, u_dot)


def _momentum_rhs(sys: StokesDaeSystem, x1: np.ndarray, x1_dot: np.ndarray, u: np.ndarray) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return sys.E11 @ np.asarray(x1_dot, dtype=float) - sys.A11 @ x1 - sys.N @ kron_power(x1, 2) - sys.B1 @ u


def recover_algebraic(
    sys: StokesDaeSystem,
    x1: np.ndarray,
    x1_dot: np.ndarray,
    u: np.ndarray,
    tol: float = 1e-6,
    strict: bool = True,
) -> np.ndarray:
    """Least-squares solution of ``A12 x2 = E11 x1' - A11 x1 - N (x1 (x) x1) - B1 u``.

    With ``strict`` set, raises :class:`ValidationFailure` when the right-hand
    side leaves ``range(A12)`` by more than ``tol`` (relative), i.e. the inputs
    do not lie on a trajectory.
    """
    rhs = _momentum_rhs(sys, x1, x1_dot, u)
    if sys.n2 == 0:
        x2 = np.zeros(0)
    else:
        x2 = np.linalg.lstsq(sys.A12, rhs, rcond=None)[0]
    miss = float(np.linalg.norm(sys.A12 @ x2 - rhs))
    if strict and miss > tol * (1.0 + float(np.linalg.norm(rhs))):
        raise ValidationFailure(f"inconsistent state: momentum residual {miss:.3e} outside range(A12)")
    return x2


def momentum_residual(
    sys: StokesDaeSystem,
    x1: np.ndarray,
    x1_dot: np.ndarray,
    x2: np.ndarray,
    u: np.ndarray,
) -> float:
    """Norm of ``E11 x1' - A11 x1 - A12 x2 - N (x1 (x) x1) - B1 u``."""
    return float(np.linalg.norm(_momentum_rhs(sys, x1, x1_dot, u) - sys.A12 @ np.asarray(x2, dtype=float)))
