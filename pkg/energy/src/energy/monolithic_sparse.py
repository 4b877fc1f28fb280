"""Energy coefficients from bordered saddle systems in the original variables.

Instead of projecting onto ``null(A12^T)``, every order ``k >= 3`` solves::

    [ L_k^{E11^T}(M)     M_k^I(A12) ] [ w_hat ]   [ b ]
    [ M_k^I(A12)^T            0     ] [ Omega ] = [ 0 ]

with ``M = A11^T - eta E11^T W_hat_2 B1 B1^T``. The second block row keeps
every Kronecker slot of ``w_hat`` inside ``null(A12^T)``; ``Omega`` is a
multiplier with no further use. Only systems with ``B2 = 0`` are covered.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from daekron.errors import DimensionError, IterationLimitError, SingularSystemError, ValidationFailure
from daekron.schemas.reports import EnergyKind, EnergyMethod, RankIdentityReport
from daekron.services.solver_settings import KWaySettings, MonolithicSettings, RiccatiSettings
from scipy.sparse.linalg import LinearOperator, gmres, spsolve

from energy.dae_reduction import (
    ProjectorPair,
    QuadraticControlSystem,
    SaddlePointFactors,
    StokesDaeSystem,
    null_space_basis,
    reduce_system,
)
from energy.kron_ops import (
    DENSE_ASSEMBLY_LIMIT,
    BlockKroneckerMatrix,
    KWayLyapunovOperator,
    build_Lk,
    build_Mk,
    contract_power,
    kron_apply,
    symmetrize_coeff,
    unfold,
)
from energy.lin_solvers import solve_riccati_generalized
from energy.poly_algebra import EnergyPolynomial, control_coefficients, hjb_known_part

logger = logging.getLogger(__name__)

_RICCATI = RiccatiSettings()
_MONOLITHIC = MonolithicSettings()
_KWAY = KWaySettings()

PIVOT_TOL = 1e-12
DENSE_RANK_LIMIT = 4000


def _require_b2_zero(sys: StokesDaeSystem) -> None:
    if np.any(sys.B2):
        raise ValidationFailure("the monolithic path only covers systems with B2 = 0")


def build_orthogonal_R(A12: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``R = I - A12 A12^+ = Q1 Q1^T`` and its orthonormal factor ``Q1``."""
    Q1 = null_space_basis(A12)
    return Q1 @ Q1.T, Q1


def pivot_columns(A12: np.ndarray, tol: float = PIVOT_TOL) -> list[int]:
    """Pivot columns of ``A12^T`` under row-wise elimination with column pivoting.

    Ties go to the lowest column index.
    """
    work = np.atleast_2d(np.asarray(A12, dtype=float)).T.copy()
    scale = max(float(np.max(np.abs(work))) if work.size else 0.0, np.finfo(float).tiny)
    pivots: list[int] = []
    for i in range(work.shape[0]):
        row = np.abs(work[i])
        row[pivots] = 0.0
        j = int(np.argmax(row))
        if row[j] <= tol * scale:
            continue
        pivots.append(j)
        work[i + 1 :] -= np.outer(work[i + 1 :, j] / work[i, j], work[i])
    return pivots


def build_Itilde(A12: np.ndarray) -> sp.csr_matrix:
    """Identity columns at the non-pivot columns of ``A12^T``, as a sparse n1 x (n1 - r2) matrix."""
    A12 = np.atleast_2d(np.asarray(A12, dtype=float))
    n1 = A12.shape[0]
    pivots = set(pivot_columns(A12))
    keep = [j for j in range(n1) if j not in pivots]
    data = np.ones(len(keep))
    return sp.csr_matrix((data, (keep, np.arange(len(keep)))), shape=(n1, len(keep)))


@dataclass(eq=False)
class ProjectedCoefficientSet:
    """Coefficients ``W_hat_2, w_hat_3, ...`` living in the original n1-dimensional variables."""

    eta: float
    W2_hat: np.ndarray
    W2_tilde: np.ndarray
    projectors: ProjectorPair
    w_hat: dict[int, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.w_hat.setdefault(2, self.W2_hat.ravel())

    @property
    def n1(self) -> int:
        return int(self.W2_hat.shape[0])

    @property
    def degree(self) -> int:
        return max(self.w_hat)

    def kernel_defect(self, A12: np.ndarray) -> float:
        """Largest ``|A12^T W_(i)|`` over all orders and all mode unfoldings."""
        n1, worst = self.n1, 0.0
        for k, w in self.w_hat.items():
            tensor = w.reshape((n1,) * k)
            for axis in range(k):
                unfolded = np.moveaxis(tensor, axis, 0).reshape(n1, -1)
                worst = max(worst, float(np.linalg.norm(A12.T @ unfolded)))
        return worst


def solve_projected_riccati_sparse(
    sys: StokesDaeSystem,
    eta: float,
    projectors: ProjectorPair | None = None,
    settings: RiccatiSettings = _RICCATI,
) -> ProjectedCoefficientSet:
    """``W_hat_2 = Theta_r W_tilde_2 Theta_r^T`` from the E_d-weighted reduced Riccati equation."""
    _require_b2_zero(sys)
    pair = projectors if projectors is not None else reduce_system(sys).projectors
    T = pair.Theta_r
    E_d = T.T @ sys.E11 @ T
    sol = solve_riccati_generalized(T.T @ sys.A11 @ T, T.T @ sys.B1, sys.C1 @ T, E_d, eta, settings)
    W2_hat = T @ sol.W @ T.T
    W2_hat = 0.5 * (W2_hat + W2_hat.T)
    coeffs = ProjectedCoefficientSet(eta=float(eta), W2_hat=W2_hat, W2_tilde=sol.W, projectors=pair)
    coeffs.diagnostics["projected_riccati_residual"] = projected_riccati_residual(sys, W2_hat, eta, T)
    logger.debug("projected Riccati residual %.3e", coeffs.diagnostics["projected_riccati_residual"])
    return coeffs


def projected_riccati_residual(sys: StokesDaeSystem, W2_hat: np.ndarray, eta: float, Theta_r: np.ndarray) -> float:
    """``|Theta_r^T (A11^T W E11 + E11^T W A11 + C1^T C1 - eta E11^T W B1 B1^T W E11) Theta_r|``."""
    WE = W2_hat @ sys.E11
    WB = sys.E11.T @ W2_hat @ sys.B1
    full = sys.A11.T @ WE + WE.T @ sys.A11 + sys.C1.T @ sys.C1 - eta * WB @ WB.T
    return float(np.linalg.norm(Theta_r.T @ full @ Theta_r))


def _weighted_gradients(sys: StokesDaeSystem, w_hat: dict[int, np.ndarray], top: int) -> dict[int, np.ndarray]:
    """``P_hat_a E11^(a)`` for ``a = 1..top``, with ``E11`` applied slot by slot."""
    n1 = sys.n1
    gradients: dict[int, np.ndarray] = {}
    for a in range(1, top + 1):
        P = 0.5 * (a + 1) * unfold(w_hat[a + 1], n1, a + 1)
        gradients[a] = kron_apply([sys.E11.T] * a, P.T).T
    return gradients


def assemble_rhs_b(k: int, sys: StokesDaeSystem, w_hat: dict[int, np.ndarray], eta: float) -> np.ndarray:
    """Right-hand side of the order-``k`` bordered system (``k >= 3``).

    Collects the quadratic-drift term of order ``k - 1`` and the
    ``eta``-weighted products of the lower-order feedback terms, all
    evaluated in ``E11``-weighted original coordinates.
    """
    if k < 3:
        raise ValueError(f"bordered right-hand sides start at order 3, got {k}")
    _require_b2_zero(sys)
    dyn = QuadraticControlSystem(A=sys.A11, N=sys.N, B=sys.B1, C=sys.C1)
    gradients = _weighted_gradients(sys, w_hat, k - 2)
    controls = control_coefficients(dyn, gradients, float(eta), k - 2)
    return -2.0 * symmetrize_coeff(hjb_known_part(dyn, gradients, controls, k, float(eta)), sys.n1, k)


def _closed_loop_factor(sys: StokesDaeSystem, W2_hat: np.ndarray, eta: float) -> sp.csr_matrix:
    low_rank = (sys.E11.T @ W2_hat @ sys.B1) @ sys.B1.T
    return sp.csr_matrix(sys.A11.T) - eta * sp.csr_matrix(low_rank)


@dataclass(eq=False)
class AugmentedKroneckerSystem:
    """Order-``k`` bordered system in factor form."""

    k: int
    L: KWayLyapunovOperator
    Mk: BlockKroneckerMatrix
    b: np.ndarray
    assembly_limit: int = DENSE_ASSEMBLY_LIMIT

    @classmethod
    def build(
        cls,
        k: int,
        sys: StokesDaeSystem,
        W2_hat: np.ndarray,
        eta: float,
        b: np.ndarray,
        assembly_limit: int = DENSE_ASSEMBLY_LIMIT,
    ) -> AugmentedKroneckerSystem:
        M = _closed_loop_factor(sys, W2_hat, eta)
        L = build_Lk(M, sp.csr_matrix(sys.E11.T), k)
        Mk = build_Mk(sp.csr_matrix(sys.A12), build_Itilde(sys.A12), k)
        return cls(k=k, L=L, Mk=Mk, b=np.asarray(b, dtype=float), assembly_limit=assembly_limit)

    @property
    def n_unknowns(self) -> int:
        return self.L.shape[1]

    @property
    def n_multipliers(self) -> int:
        return self.Mk.shape[1]

    @property
    def side(self) -> int:
        return self.n_unknowns + self.n_multipliers

    def expected_side(self, n1: int, n2: int) -> int:
        return 2 * n1**self.k - (n1 - n2) ** self.k

    def assemble(self) -> sp.csr_matrix:
        L = self.L.assemble(sparse=True, limit=self.assembly_limit)
        Mk = self.Mk.assemble(sparse=True, limit=self.assembly_limit)
        return sp.bmat([[L, Mk], [Mk.T, None]], format="csr")

    def matvec(self, v: np.ndarray) -> np.ndarray:
        w, omega = v[: self.n_unknowns], v[self.n_unknowns :]
        return np.concatenate([self.L.matvec(w) + self.Mk.matvec(omega), self.Mk.rmatvec(w)])

    def numerical_rank(self) -> int:
        if self.side > DENSE_RANK_LIMIT:
            raise ValueError(f"refusing a dense rank computation for a system of side {self.side}")
        return int(np.linalg.matrix_rank(self.assemble().toarray()))

    def _jacobi(self) -> np.ndarray:
        diag = np.zeros(self.n_unknowns)
        e_diag = np.asarray(self.L.E.diagonal()) if self.L.E is not None else np.ones(self.L.n)
        m_diag = np.asarray(self.L.M.diagonal())
        for i in range(self.k):
            parts = [e_diag] * i + [m_diag] + [e_diag] * (self.k - i - 1)
            term = parts[0]
            for part in parts[1:]:
                term = np.kron(term, part)
            diag += term
        diag[np.abs(diag) < np.finfo(float).tiny] = 1.0
        return diag

    def block_residuals(self, w: np.ndarray, omega: np.ndarray) -> tuple[float, float]:
        """Relative residuals of the two block rows."""
        top = self.L.matvec(w) + self.Mk.matvec(omega) - self.b
        bottom = self.Mk.rmatvec(w)
        scale = max(float(np.linalg.norm(self.b)), np.finfo(float).tiny)
        return float(np.linalg.norm(top)) / scale, float(np.linalg.norm(bottom)) / scale

    def solve(self, settings: MonolithicSettings = _MONOLITHIC) -> tuple[np.ndarray, np.ndarray]:
        if not np.any(self.b):
            return np.zeros(self.n_unknowns), np.zeros(self.n_multipliers)
        rhs = np.concatenate([self.b, np.zeros(self.n_multipliers)])
        logger.debug("order-%d bordered system: side %d", self.k, self.side)
        if self.side <= settings.direct_limit:
            sol = np.asarray(spsolve(self.assemble().tocsc(), rhs))
            if not np.all(np.isfinite(sol)):
                rank = self.numerical_rank() if self.side <= DENSE_RANK_LIMIT else None
                raise SingularSystemError(
                    f"order-{self.k} bordered system is singular (rank {rank}, side {self.side})",
                    rank=rank,
                    expected_rank=self.side,
                )
        else:
            sol = self._solve_iterative(rhs, settings)
        return sol[: self.n_unknowns], sol[self.n_unknowns :]

    def _solve_iterative(self, rhs: np.ndarray, settings: MonolithicSettings) -> np.ndarray:
        inv_diag = np.concatenate([1.0 / self._jacobi(), np.ones(self.n_multipliers)])
        A = LinearOperator((self.side, self.side), matvec=self.matvec, dtype=float)
        precond = LinearOperator((self.side, self.side), matvec=lambda v: inv_diag * v, dtype=float)
        sol, info = gmres(
            A,
            rhs,
            rtol=settings.gmres_tol,
            restart=settings.gmres_restart,
            maxiter=settings.gmres_max_iter,
            M=precond,
        )
        if info != 0:
            raise IterationLimitError(f"GMRES on the order-{self.k} bordered system stopped with info={info}")
        return np.asarray(sol)


def solve_monolithic_k(
    k: int,
    sys: StokesDaeSystem,
    W2_hat: np.ndarray,
    eta: float,
    b: np.ndarray,
    settings: MonolithicSettings = _MONOLITHIC,
    diagnostics: dict[str, float] | None = None,
    kway: KWaySettings = _KWAY,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the order-``k`` bordered system; returns ``(w_hat_k, Omega)``.

    Block-row residuals go to ``diagnostics`` when given. Sparse assembly of the
    direct path is capped by ``kway.dense_assembly_limit`` entries.
    """
    _require_b2_zero(sys)
    system = AugmentedKroneckerSystem.build(k, sys, W2_hat, eta, b, kway.dense_assembly_limit)
    w, omega = system.solve(settings)
    if np.any(b):
        top, bottom = system.block_residuals(w, omega)
        logger.debug("order-%d bordered residuals: %.3e / %.3e", k, top, bottom)
        if diagnostics is not None:
            diagnostics[f"bordered_residual_{k}"] = top
            diagnostics[f"constraint_residual_{k}"] = bottom
    return w, omega


def recover_dense_coeff(w_hat: np.ndarray, sys: StokesDaeSystem, projectors: ProjectorPair) -> np.ndarray:
    """Reduced coefficient ``w_k = ((Pi E11 Theta_r)^T)^(k) w_hat_k``, applied factor-wise."""
    w_hat = np.asarray(w_hat, dtype=float).ravel()
    k = 1
    while sys.n1**k < w_hat.size:
        k += 1
    if sys.n1**k != w_hat.size:
        raise DimensionError(f"coefficient of length {w_hat.size} is not a Kronecker power of {sys.n1}")
    Phi = (projectors.Pi @ sys.E11 @ projectors.Theta_r).T
    return kron_apply([Phi] * k, w_hat)


def direct_feedback_eval(
    coeffs: ProjectedCoefficientSet,
    sys: StokesDaeSystem,
    eta: float,
    x1: np.ndarray,
    d: int,
) -> np.ndarray:
    """``u = -(eta/2) B1^T Pi^T sum_{i=2..d+1} i W_hat_i (Pi E11 x1)^(i-1)``, without forming ``Pi``."""
    _require_b2_zero(sys)
    factors = SaddlePointFactors(sys.E11, sys.A12)
    z = factors.apply_pi(sys.E11 @ np.asarray(x1, dtype=float))
    acc = np.zeros(sys.n1)
    for i in range(2, d + 2):
        acc += i * contract_power(coeffs.w_hat[i], z, i - 1)
    return -0.5 * eta * sys.B1.T @ factors.apply_pi_t(acc)


def compute_future_energy_monolithic(
    sys: StokesDaeSystem,
    eta: float,
    degree: int,
    riccati: RiccatiSettings = _RICCATI,
    settings: MonolithicSettings = _MONOLITHIC,
    kway: KWaySettings = _KWAY,
) -> tuple[EnergyPolynomial, ProjectedCoefficientSet]:
    """Future energy through the bordered systems, recovered in reduced coordinates."""
    if degree < 2:
        raise ValueError(f"energy degree must be >= 2, got {degree}")
    _require_b2_zero(sys)
    logger.info("Monolithic future energy: n1=%d, n2=%d, eta=%g, degree=%d", sys.n1, sys.n2, eta, degree)
    coeffs = solve_projected_riccati_sparse(sys, eta, settings=riccati)
    for k in range(3, degree + 1):
        b = assemble_rhs_b(k, sys, coeffs.w_hat, eta)
        w, _ = solve_monolithic_k(k, sys, coeffs.W2_hat, eta, b, settings, coeffs.diagnostics, kway)
        coeffs.w_hat[k] = symmetrize_coeff(w, sys.n1, k)
    coeffs.diagnostics["kernel_defect"] = coeffs.kernel_defect(sys.A12)
    recovered = {k: recover_dense_coeff(w, sys, coeffs.projectors) for k, w in sorted(coeffs.w_hat.items())}
    n = coeffs.projectors.Theta_r.shape[1]
    poly = EnergyPolynomial(
        kind=EnergyKind.FUTURE,
        eta=float(eta),
        n=n,
        coeffs=recovered,
        method=EnergyMethod.MONOLITHIC,
        diagnostics=dict(coeffs.diagnostics),
    )
    return poly, coeffs


def _slot_projector(block: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the complement of ``range(block)``."""
    return np.eye(block.shape[0]) - block @ np.linalg.pinv(block)


def rank_identities_check(
    n1: int,
    n2: int,
    k: int,
    seed: int = 0,
    system: StokesDaeSystem | None = None,
    eta: float = 0.0,
    tol: float = 1e-10,
) -> RankIdentityReport:
    """Brute-force checks of the block-rank identities on a random ``A12``.

    * ``rank M_k(A12) = rank M_k^I(A12) = n1^k - (n1 - r2)^k``
    * the column count of ``M_k^I(A12)`` follows the counting identity
    * the product of the slot projectors equals ``R^(k)``
    * optionally, the bordered matrix of ``system`` has full rank
    """
    rng = np.random.default_rng(seed)
    A12 = system.A12 if system is not None else rng.standard_normal((n1, n2))
    n1, n2 = A12.shape
    r2 = int(np.linalg.matrix_rank(A12))
    expected = n1**k - (n1 - r2) ** k

    full = build_Mk(A12, None, k)
    selected = build_Mk(A12, build_Itilde(A12).toarray(), k)
    dense_full = full.assemble(sparse=False)
    rank_full = int(np.linalg.matrix_rank(dense_full))
    selected_dense = selected.assemble(sparse=False)
    rank_selected = int(np.linalg.matrix_rank(selected_dense))
    counting = r2 * sum(n1 ** (k - i) * (n1 - r2) ** (i - 1) for i in range(1, k + 1))

    R, _ = build_orthogonal_R(A12)
    edges = np.cumsum([0] + [full.block_cols(i) for i in range(1, k + 1)])
    product = np.eye(n1**k)
    for start, stop in zip(edges[:-1], edges[1:], strict=True):
        product = product @ _slot_projector(dense_full[:, start:stop])
    target = R
    for _ in range(k - 1):
        target = np.kron(target, R)
    error = float(np.linalg.norm(product - target))

    bordered_side = bordered_rank = None
    if system is not None:
        coeffs = solve_projected_riccati_sparse(system, eta) if eta else None
        W2_hat = coeffs.W2_hat if coeffs is not None else np.zeros((n1, n1))
        augmented = AugmentedKroneckerSystem.build(k, system, W2_hat, eta, np.zeros(n1**k))
        bordered_side = augmented.side
        bordered_rank = augmented.numerical_rank()

    report = RankIdentityReport(
        n1=n1,
        n2=n2,
        k=k,
        r2=r2,
        expected_rank=expected,
        rank_full=rank_full,
        rank_selected=rank_selected,
        selected_columns=int(selected_dense.shape[1]),
        counting_identity=counting == expected == selected_dense.shape[1],
        projector_product_error=error,
        bordered_side=bordered_side,
        bordered_rank=bordered_rank,
        tolerance=tol,
    )
    logger.debug("rank identities n1=%d n2=%d k=%d: passed=%s", n1, n2, k, report.passed)
    return report


def counting_identity_holds(n1: int, r2: int, k: int) -> bool:
    """``r2 sum_i n1^(k-i) (n1-r2)^(i-1) = n1^k - (n1-r2)^k``."""
    lhs = r2 * sum(n1 ** (k - i) * (n1 - r2) ** (i - 1) for i in range(1, k + 1))
    return lhs == n1**k - (n1 - r2) ** k
