"""Dense Riccati/Lyapunov solvers and the structured k-way Lyapunov solve."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from daekron.errors import (
    ConditioningError,
    DimensionError,
    IterationLimitError,
    NoStabilizingSolutionError,
    ResonantSpectrumError,
)
from daekron.services.solver_settings import KWaySettings, RiccatiSettings
from scipy.linalg import lu_factor, lu_solve, schur, solve_continuous_lyapunov, solve_sylvester

from energy.kron_ops import KWayLyapunovOperator, kron_apply

logger = logging.getLogger(__name__)

_RICCATI = RiccatiSettings()
_KWAY = KWaySettings()


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing Riccati solution with its certificate."""

    W: np.ndarray
    residual_norm: float
    closed_loop_abscissa: float
    newton_steps: int = 0


def _as_square(name: str, A: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got {A.shape[0]}x{A.shape[1]}")
    return A


def _sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def _abscissa(A: np.ndarray) -> float:
    if A.size == 0:
        return -math.inf
    return float(np.max(np.linalg.eigvals(A).real))


def solve_lyapunov(A: np.ndarray, Q: np.ndarray, tol: float = _KWAY.singular_tol) -> np.ndarray:
    """Solve ``A^T X + X A + Q = 0``."""
    A = _as_square("A", A)
    Q = _as_square("Q", Q)
    if Q.shape != A.shape:
        raise DimensionError(f"Q must be {A.shape[0]}x{A.shape[0]}, got {Q.shape[0]}x{Q.shape[1]}")
    eigs = np.linalg.eigvals(A)
    gap = float(np.min(np.abs(eigs[:, None] + eigs[None, :])))
    scale = 2.0 * max(float(np.max(np.abs(eigs))), np.finfo(float).tiny)
    if gap <= tol * scale:
        raise ResonantSpectrumError(f"resonant spectrum: min |l_i + l_j| = {gap:.3e} (scale {scale:.3e})")
    X = _sym(solve_continuous_lyapunov(A.T, -Q))
    residual = float(np.linalg.norm(A.T @ X + X @ A + Q))
    logger.debug("Lyapunov residual %.3e (|Q| = %.3e)", residual, np.linalg.norm(Q))
    return X


def _care_residual(A: np.ndarray, G: np.ndarray, Q: np.ndarray, X: np.ndarray) -> np.ndarray:
    return A.T @ X + X @ A - X @ G @ X + Q


def _care_stabilizing(
    A: np.ndarray,
    G: np.ndarray,
    Q: np.ndarray,
    settings: RiccatiSettings,
) -> tuple[np.ndarray, int]:
    """Stabilizing solution of ``A^T X + X A - X G X + Q = 0`` (``A - G X`` stable)."""
    n = A.shape[0]
    H = np.block([[A, -G], [-Q, -A.T]])
    _, Z, sdim = schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NoStabilizingSolutionError(
            f"no stabilizing solution: Hamiltonian has {sdim} stable eigenvalues, expected {n}"
        )
    U11, U21 = Z[:n, :n], Z[n:, :n]
    rcond = 1.0 / np.linalg.cond(U11) if n else 1.0
    if rcond < 1e-14:
        raise NoStabilizingSolutionError(f"no stabilizing solution: invariant subspace basis rcond {rcond:.2e}")
    X = _sym(np.linalg.solve(U11.T, U21.T).T)

    # Newton-Kleinman refinement in correction form
    scale = max(1.0, float(np.linalg.norm(A)))
    best = float(np.linalg.norm(_care_residual(A, G, Q, X)))
    steps = 0
    while best > settings.residual_tol * (1.0 + float(np.linalg.norm(X))) * scale:
        if steps >= settings.newton_max_iter:
            raise IterationLimitError(f"Newton refinement stopped at residual {best:.3e} after {steps} steps")
        closed = A - G @ X
        candidate = _sym(X + solve_lyapunov(closed, _care_residual(A, G, Q, X)))
        res = float(np.linalg.norm(_care_residual(A, G, Q, candidate)))
        steps += 1
        if res >= best:
            if best <= 1e-6 * (1.0 + float(np.linalg.norm(X))) * scale:
                logger.warning("Newton refinement stalled at residual %.3e", best)
                break
            raise IterationLimitError(f"Newton refinement stagnated at residual {best:.3e}")
        X, best = candidate, res
    logger.debug("Riccati residual %.3e after %d Newton steps", best, steps)
    return X, steps


def _solve_future_standard(
    A: np.ndarray, B: np.ndarray, C: np.ndarray, eta: float, settings: RiccatiSettings
) -> RiccatiSolution:
    Q = C.T @ C
    if eta == 0.0:
        W = solve_lyapunov(A, Q)
        steps = 0
    else:
        W, steps = _care_stabilizing(A, eta * (B @ B.T), Q, settings)
    residual = float(np.linalg.norm(A.T @ W + W @ A + Q - eta * W @ B @ B.T @ W))
    abscissa = _abscissa(A - eta * B @ B.T @ W)
    if eta != 0.0 and abscissa >= 0.0:
        raise NoStabilizingSolutionError(f"Riccati solution leaves the closed loop unstable: abscissa {abscissa:.3e}")
    return RiccatiSolution(W, residual, abscissa, steps)


def _normalize(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    A = _as_square("A", A)
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    return A, B, C


def solve_riccati_future(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    E: np.ndarray | None = None,
    eta: float = 1.0,
    settings: RiccatiSettings = _RICCATI,
) -> RiccatiSolution:
    """Stabilizing solution of ``A^T W E + E^T W A + C^T C - eta E^T W B B^T W E = 0``.

    With ``E`` given the equation is solved for ``W_bar = E^T W E`` on the
    normalized pair ``(E^-1 A, E^-1 B)`` and mapped back.
    """
    A, B, C = _normalize(A, B, C)
    if E is None:
        return _solve_future_standard(A, B, C, eta, settings)
    E = _as_square("E", E)
    lu = lu_factor(E)
    bar = _solve_future_standard(lu_solve(lu, A), lu_solve(lu, B), C, eta, settings)
    W = _sym(lu_solve(lu, lu_solve(lu, bar.W, trans=1).T, trans=1).T)
    residual = float(
        np.linalg.norm(A.T @ W @ E + E.T @ W @ A + C.T @ C - eta * E.T @ W @ B @ B.T @ W @ E)
    )
    return RiccatiSolution(W, residual, bar.closed_loop_abscissa, bar.newton_steps)


def solve_riccati_generalized(
    A: np.ndarray, B: np.ndarray, C: np.ndarray, E: np.ndarray, eta: float, settings: RiccatiSettings = _RICCATI
) -> RiccatiSolution:
    """E-weighted future Riccati equation; see :func:`solve_riccati_future`."""
    return solve_riccati_future(A, B, C, E, eta, settings)


def solve_riccati_past(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    eta: float = 1.0,
    settings: RiccatiSettings = _RICCATI,
) -> RiccatiSolution:
    """Solution of ``A^T V + V A - eta C^T C + V B B^T V = 0`` with ``-(A + B B^T V)`` stable.

    Solved as the future equation of the reversed dynamics ``-A``.
    """
    A, B, C = _normalize(A, B, C)
    V, steps = _care_stabilizing(-A, B @ B.T, eta * (C.T @ C), settings)
    residual = float(np.linalg.norm(A.T @ V + V @ A - eta * C.T @ C + V @ B @ B.T @ V))
    abscissa = _abscissa(-(A + B @ B.T @ V))
    if abscissa >= 0.0:
        raise NoStabilizingSolutionError(f"past Riccati solution is not anti-stabilizing: abscissa {abscissa:.3e}")
    return RiccatiSolution(V, residual, abscissa, steps)


def _diagonal_blocks(T: np.ndarray) -> list[tuple[int, int]]:
    """1x1 and 2x2 diagonal blocks of a real quasi-triangular Schur factor."""
    n = T.shape[0]
    blocks: list[tuple[int, int]] = []
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            blocks.append((i, i + 2))
            i += 2
        else:
            blocks.append((i, i + 1))
            i += 1
    return blocks


class KWaySolver:
    """Solves ``L_k^{E^T}(F^T) w = rhs`` for any order ``k``.

    ``L_k^{E^T}(F^T) = (E^T)^(k) L_k(E^-T F^T)``; the inner operator is reduced
    to quasi-triangular form with one real Schur factorization, after which
    each order is solved by blocked back-substitution over the Kronecker slots.
    """

    def __init__(self, F: np.ndarray, E: np.ndarray | None = None, singular_tol: float = _KWAY.singular_tol) -> None:
        F = _as_square("F", F)
        self.n = F.shape[0]
        self.F = F
        self.E = None if E is None else _as_square("E", E)
        self.singular_tol = singular_tol
        if self.E is None:
            self._e_inv_t: np.ndarray | None = None
            G = F.T
        else:
            lu = lu_factor(self.E.T)
            self._e_inv_t = lu_solve(lu, np.eye(self.n))
            G = lu_solve(lu, F.T)
        self._T, self._U = schur(G, output="real")
        self._blocks = _diagonal_blocks(self._T)
        self._eigs = np.linalg.eigvals(G)
        self._checked: set[int] = set()

    def check_spectrum(self, k: int) -> float:
        """Smallest |sum of k eigenvalues| relative to the spectral scale."""
        n = self.n
        scale = k * max(float(np.max(np.abs(self._eigs))) if n else 0.0, np.finfo(float).tiny)
        if math.comb(n + k - 1, k) > 200_000:
            logger.debug("skipping order-%d spectrum check for n=%d", k, n)
            return math.inf
        idx = np.array(list(combinations_with_replacement(range(n), k)), dtype=int)
        gap = float(np.min(np.abs(self._eigs[idx].sum(axis=1))))
        if gap <= self.singular_tol * scale:
            raise ConditioningError(f"near-singular order-{k} operator: min |sum of eigenvalues| = {gap:.3e}")
        return gap / scale

    def operator(self, k: int) -> KWayLyapunovOperator:
        return KWayLyapunovOperator(self.F.T, None if self.E is None else self.E.T, k)

    def solve(self, k: int, rhs: np.ndarray) -> np.ndarray:
        if k < 1:
            raise ValueError(f"k-way order must be >= 1, got {k}")
        rhs = np.asarray(rhs, dtype=float).ravel()
        if rhs.size != self.n**k:
            raise DimensionError(f"order-{k} right-hand side must have length {self.n**k}, got {rhs.size}")
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if k not in self._checked:
            self.check_spectrum(k)
            self._checked.add(k)
        y = rhs if self._e_inv_t is None else kron_apply([self._e_inv_t] * k, rhs)
        z = kron_apply([self._U.T] * k, y)
        zeta = self._solve_shifted(np.zeros((1, 1)), z.reshape((1,) + (self.n,) * k))
        w = kron_apply([self._U] * k, zeta.ravel())
        logger.debug("order-%d k-way residual %.3e", k, self.residual_norm(k, w, rhs))
        return w

    def residual_norm(self, k: int, w: np.ndarray, rhs: np.ndarray) -> float:
        return float(np.linalg.norm(self.operator(k).matvec(w) - rhs))

    def _solve_shifted(self, shift: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(shift (x) I + I (x) L(T)) z = rhs``; ``rhs`` is (s, n, ..., n)."""
        T = self._T
        if rhs.ndim == 2:
            return solve_sylvester(shift, T.T, rhs)
        s = shift.shape[0]
        tail = rhs.shape[2:]
        z = np.zeros_like(rhs)
        r = rhs.copy()
        for start, stop in reversed(self._blocks):
            if stop < self.n:
                coupling = np.tensordot(T[start:stop, stop:], z[:, stop:], axes=([1], [1]))
                r[:, start:stop] -= np.moveaxis(coupling, 0, 1)
            width = stop - start
            sub_shift = np.kron(shift, np.eye(width)) + np.kron(np.eye(s), T[start:stop, start:stop])
            sub = r[:, start:stop].reshape((s * width,) + tail)
            z[:, start:stop] = self._solve_shifted(sub_shift, sub).reshape((s, width) + tail)
        return z


def solve_kway(F: np.ndarray, E: np.ndarray | None, k: int, rhs: np.ndarray) -> np.ndarray:
    """Solve ``L_k^{E^T}(F^T) w = rhs``."""
    return KWaySolver(F, E).solve(k, rhs)
