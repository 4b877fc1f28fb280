"""Built-in test systems: a two-state scalar example and a Fisher boundary-control problem."""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, Field

from energy.dae_reduction import StokesDaeSystem

logger = logging.getLogger(__name__)

SCALAR_EXAMPLE_ETA = 10.0

# Case-1 initial condition of the reduced Fisher state, as printed to two decimals.
FISHER_CASE1_INITIAL_STATE = (
    -0.06, -0.47, 0.05, -0.06, -0.08, -0.17, -0.30, 0.12, -0.20, -0.23, 0.12, 0.03, -0.37, 0.01, -0.32,
)  # fmt: skip


class FisherConfig(BaseModel):
    """Uniform-mesh P1 discretization of ``w_t = alpha w_xx + beta w (1 - w)`` on (0, 1).

    ``w(t, 0) = u(t)`` is the boundary control and ``w(t, 1) = 0``.
    """

    ne: int = Field(default=16, ge=2)
    alpha: float = Field(default=0.1, gt=0)
    beta: float = 3.0
    eta: float = 30.0

    model_config = {"frozen": True}


FISHER_CASE1 = FisherConfig(ne=16, alpha=0.1, beta=3.0, eta=30.0)
FISHER_CASE2 = FisherConfig(ne=16, alpha=0.1, beta=1.0, eta=30.0)


def build_scalar_example() -> StokesDaeSystem:
    """Two differential states, one constraint ``x_a + x_b = 0`` and one input."""
    N = np.zeros((2, 4))
    N[0] = [0.5, -1.0, -1.0, 0.5]
    return StokesDaeSystem(
        E11=np.eye(2),
        A11=np.diag([1.0, -2.0]),
        A12=np.array([[1.0], [1.0]]),
        N=N,
        B1=np.array([[1.0], [0.0]]),
        B2=np.zeros((1, 1)),
        C1=np.array([[0.0, 1.0]]),
        name="scalar-example",
    )


# Exact integrals of products of the two linear hat functions on one element, divided by h.
_LOCAL_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_LOCAL_STIFFNESS = np.array([[1.0, -1.0], [-1.0, 1.0]])


def _local_cubic() -> np.ndarray:
    """``int phi_a phi_b phi_c / h``: 1/4 when all three indices agree, 1/12 otherwise."""
    T = np.full((2, 2, 2), 1.0 / 12.0)
    T[0, 0, 0] = T[1, 1, 1] = 0.25
    return T


def fisher_mass_stiffness(ne: int) -> tuple[np.ndarray, np.ndarray]:
    """Mass and stiffness matrices on nodes ``0..ne-1`` (the node at 1 is eliminated)."""
    if ne < 2:
        raise ValueError(f"need at least two elements, got {ne}")
    h = 1.0 / ne
    M = np.zeros((ne + 1, ne + 1))
    K = np.zeros((ne + 1, ne + 1))
    for e in range(ne):
        idx = np.ix_([e, e + 1], [e, e + 1])
        M[idx] += h * _LOCAL_MASS
        K[idx] += _LOCAL_STIFFNESS / h
    return M[:ne, :ne], K[:ne, :ne]


def fisher_quadratic(ne: int, beta: float) -> np.ndarray:
    """Tensor of ``-beta int phi_i w^2`` as an ``ne x ne^2`` matrix acting on ``x (x) x``."""
    h = 1.0 / ne
    local = h * _local_cubic()
    T = np.zeros((ne + 1, ne + 1, ne + 1))
    for e in range(ne):
        nodes = [e, e + 1]
        T[np.ix_(nodes, nodes, nodes)] += local
    return -beta * T[:ne, :ne, :ne].reshape(ne, ne * ne)


def _fisher_blocks(cfg: FisherConfig) -> dict[str, np.ndarray]:
    ne = cfg.ne
    M, K = fisher_mass_stiffness(ne)
    A12 = np.zeros((ne, 1))
    A12[0, 0] = 1.0
    return {
        "E11": M,
        "A11": -cfg.alpha * K + cfg.beta * M,
        "A12": A12,
        "N": fisher_quadratic(ne, cfg.beta),
        "C1": np.full((1, ne), 1.0 / ne),
    }


def build_fisher(cfg: FisherConfig = FISHER_CASE1) -> StokesDaeSystem:
    """Boundary-controlled Fisher equation; the constraint row is ``x1[0] - u = 0``."""
    blocks = _fisher_blocks(cfg)
    logger.debug("Fisher system: ne=%d, alpha=%g, beta=%g", cfg.ne, cfg.alpha, cfg.beta)
    return StokesDaeSystem(
        B1=np.zeros((cfg.ne, 1)),
        B2=-np.ones((1, 1)),
        name=f"fisher-ne{cfg.ne}-beta{cfg.beta:g}",
        **blocks,
    )


def build_fisher_distributed(cfg: FisherConfig = FISHER_CASE1) -> StokesDaeSystem:
    """Fisher matrices with a homogeneous boundary constraint and a uniformly distributed input."""
    blocks = _fisher_blocks(cfg)
    return StokesDaeSystem(
        B1=blocks["E11"] @ np.ones((cfg.ne, 1)),
        B2=np.zeros((1, 1)),
        name=f"fisher-distributed-ne{cfg.ne}-beta{cfg.beta:g}",
        **blocks,
    )


def random_stokes_system(
    n1: int,
    n2: int,
    m: int = 1,
    p: int = 1,
    seed: int = 0,
    b2_zero: bool = True,
) -> StokesDaeSystem:
    """Random Stokes-type system with an SPD mass matrix, a dissipative drift and symmetric ``N``."""
    if not 0 <= n2 < n1:
        raise ValueError(f"need 0 <= n2 < n1, got n1={n1}, n2={n2}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n1, n1))
    E11 = np.eye(n1) + 0.1 * G @ G.T / n1
    A11 = 0.5 * rng.standard_normal((n1, n1)) - 2.0 * np.eye(n1)
    N = 0.3 * rng.standard_normal((n1, n1, n1))
    N = 0.5 * (N + N.transpose(0, 2, 1))
    return StokesDaeSystem(
        E11=E11,
        A11=A11,
        A12=rng.standard_normal((n1, n2)),
        N=N.reshape(n1, n1 * n1),
        B1=rng.standard_normal((n1, m)),
        B2=np.zeros((n2, m)) if b2_zero else rng.standard_normal((n2, m)),
        C1=rng.standard_normal((p, n1)),
        name=f"random-{n1}x{n2}-seed{seed}",
    )
