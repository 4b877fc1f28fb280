"""Polynomial energies and the polynomial expansion of the optimal control.

An energy of degree ``d`` is ``E(x) = 1/2 sum_{k=2..d} w_k^T x^(k)`` with
symmetric coefficient vectors ``w_k``. Its gradient is
``p(x) = sum_a P_a x^(a)`` with ``P_a = (a+1)/2 W_(a+1)`` and ``W_k`` the
mode-1 unfolding of ``w_k``.

The control minimizing the Hamiltonian
``p^T (f + (B + G(x)) u + S (u (x) u)) + |u|^2 / (2 rho)`` satisfies
``u = -rho (G(x)^T p + 2 Q(p) u)``; expanding both sides in powers of ``x``
gives ``u = sum_j U_j x^(j)`` degree by degree.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np
from daekron.errors import DimensionError
from daekron.schemas.reports import EnergyKind, EnergyMethod

from energy.kron_ops import contract_power, pair_vec, symmetrize_coeff, unfold

if TYPE_CHECKING:
    from energy.dae_reduction import QuadraticControlSystem

logger = logging.getLogger(__name__)


def hamiltonian_weights(kind: EnergyKind, eta: float) -> tuple[float, float]:
    """``(rho, sigma)`` of the Hamiltonian ``... + sigma/2 |Cx|^2 + |u|^2/(2 rho)``.

    The future energy penalizes the input with ``1/eta``; the past energy
    penalizes it with ``-1`` and the output with ``-eta``.
    """
    if kind is EnergyKind.FUTURE:
        return float(eta), 1.0
    return -1.0, -float(eta)


@dataclass
class EnergyPolynomial:
    """Truncated Taylor expansion of a past or future energy function."""

    kind: EnergyKind
    eta: float
    n: int
    coeffs: dict[int, np.ndarray]
    method: EnergyMethod = EnergyMethod.PROJECTED
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.coeffs or min(self.coeffs) != 2:
            raise DimensionError("an energy polynomial needs coefficients starting at order 2")
        for k, c in self.coeffs.items():
            if np.size(c) != self.n**k:
                raise DimensionError(f"order-{k} coefficient must have length {self.n**k}, got {np.size(c)}")

    @property
    def degree(self) -> int:
        return max(self.coeffs)

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).ravel()
        return 0.5 * sum(contract_power(c, x, k).item() for k, c in sorted(self.coeffs.items()))

    def matrix(self, k: int) -> np.ndarray:
        """Mode-1 unfolding ``W_k`` (n x n^(k-1)); ``matrix(2)`` is the Riccati solution."""
        return unfold(self.coeffs[k], self.n, k)

    def gradient_coefficients(self) -> dict[int, np.ndarray]:
        """``{a: P_a}`` with ``p(x) = sum_a P_a x^(a)``."""
        return {k - 1: 0.5 * k * self.matrix(k) for k in sorted(self.coeffs)}

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        out = np.zeros(self.n)
        for a, P in self.gradient_coefficients().items():
            out += contract_power(P, x, a)
        return out

    def truncate(self, degree: int) -> EnergyPolynomial:
        if not 2 <= degree <= self.degree:
            raise ValueError(f"cannot truncate a degree-{self.degree} energy to degree {degree}")
        kept = {k: c for k, c in self.coeffs.items() if k <= degree}
        return replace(self, coeffs=kept, diagnostics=dict(self.diagnostics))


def _symmetrize_rows(U: np.ndarray, n: int, j: int) -> np.ndarray:
    return np.vstack([symmetrize_coeff(row, n, j) for row in U]) if U.shape[0] else U


def next_control_coefficient(
    dyn: QuadraticControlSystem,
    gradients: dict[int, np.ndarray],
    controls: dict[int, np.ndarray],
    j: int,
    rho: float,
) -> np.ndarray:
    """``U_j`` (m x n^j) from ``P_1..P_j`` and ``U_1..U_(j-1)``."""
    n, m = dyn.n, dyn.m
    if rho == 0.0:
        return np.zeros((m, n**j))
    coeff = dyn.B.T @ gradients[j]
    if dyn.input_coupled:
        gamma = dyn.gamma_tensor
        if j >= 2:
            coeff = coeff + np.vstack([pair_vec(gradients[j - 1], gamma[:, :, col]) for col in range(m)])
        assert dyn.S is not None
        S3 = dyn.S.reshape(n, m, m)
        S_sym = S3 + S3.transpose(0, 2, 1)
        for a in range(1, j):
            b = j - a
            coeff = coeff + np.vstack([pair_vec(gradients[a], S_sym[:, col, :] @ controls[b]) for col in range(m)])
    return _symmetrize_rows(-rho * coeff, n, j)


def control_coefficients(
    dyn: QuadraticControlSystem,
    gradients: dict[int, np.ndarray],
    rho: float,
    degree: int,
) -> dict[int, np.ndarray]:
    """``{j: U_j}`` for ``j = 1..degree``; needs ``P_1..P_degree``."""
    missing = [a for a in range(1, degree + 1) if a not in gradients]
    if missing:
        raise ValueError(f"gradient coefficients {missing} are needed for a degree-{degree} control")
    controls: dict[int, np.ndarray] = {}
    for j in range(1, degree + 1):
        controls[j] = next_control_coefficient(dyn, gradients, controls, j, rho)
    return controls


def hjb_known_part(
    dyn: QuadraticControlSystem,
    gradients: dict[int, np.ndarray],
    controls: dict[int, np.ndarray],
    k: int,
    rho: float,
) -> np.ndarray:
    """Degree-``k`` Hamiltonian terms that do not involve ``w_k`` (``k >= 3``).

    Uses ``P_1..P_(k-2)`` and ``U_1..U_(k-2)``. The terms with ``U_(k-1)``
    cancel against the stationarity condition at degree one.
    """
    n, m = dyn.n, dyn.m
    total = pair_vec(gradients[k - 2], dyn.N)
    if rho == 0.0:
        return total
    for a in range(2, k - 1):
        total = total + pair_vec(gradients[a], dyn.B @ controls[k - a])
    for a in range(2, k - 1):
        total = total + pair_vec(controls[a], controls[k - a]) / (2.0 * rho)
    if dyn.input_coupled:
        gamma = dyn.gamma_tensor
        for a in range(1, k - 1):
            b = k - 1 - a
            lifted = (gamma @ controls[b]).reshape(n, -1)
            total = total + pair_vec(gradients[a], lifted)
        assert dyn.S is not None
        S3 = dyn.S.reshape(n, m, m)
        for a in range(1, k - 1):
            for b1 in range(1, k - a):
                b2 = k - a - b1
                quad = np.einsum("ilm,lc,md->icd", S3, controls[b1], controls[b2]).reshape(n, -1)
                total = total + pair_vec(gradients[a], quad)
    return total


def evaluate_control(controls: dict[int, np.ndarray], x: np.ndarray) -> np.ndarray:
    """``sum_j U_j x^(j)``."""
    x = np.asarray(x, dtype=float).ravel()
    out: np.ndarray | None = None
    for j, U in sorted(controls.items()):
        term = contract_power(U.ravel(), x, j)
        out = term if out is None else out + term
    if out is None:
        raise ValueError("no control coefficients")
    return out


def control_jacobian(controls: dict[int, np.ndarray], x: np.ndarray) -> np.ndarray:
    """Jacobian ``sum_j j U_j (I (x) x^(j-1))`` of a control with symmetric rows."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    out: np.ndarray | None = None
    for j, U in sorted(controls.items()):
        m = U.shape[0]
        term = j * contract_power(U.ravel(), x, j - 1).reshape(m, n)
        out = term if out is None else out + term
    if out is None:
        raise ValueError("no control coefficients")
    return out
