"""Tests for the bordered (monolithic) coefficient path in original coordinates."""

from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse as sp
from daekron.errors import ValidationFailure
from daekron.schemas.reports import EnergyMethod
from daekron.services.solver_settings import MonolithicSettings, merge_overrides
from energy.benchmarks import (
    SCALAR_EXAMPLE_ETA,
    FisherConfig,
    build_fisher_distributed,
    build_scalar_example,
    random_stokes_system,
)
from energy.dae_reduction import reduce_system
from energy.energy_coeffs import compute_future_energy
from energy.feedback_sim import eval_feedback
from energy.monolithic_sparse import (
    AugmentedKroneckerSystem,
    assemble_rhs_b,
    build_Itilde,
    build_orthogonal_R,
    compute_future_energy_monolithic,
    counting_identity_holds,
    direct_feedback_eval,
    pivot_columns,
    rank_identities_check,
    recover_dense_coeff,
    solve_monolithic_k,
    solve_projected_riccati_sparse,
)
from numpy.testing import assert_allclose

SHAPES = [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (5, 1), (5, 2)]
RANDOM_CASES = [(*SHAPES[seed % len(SHAPES)], seed) for seed in range(20)]


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


class TestPivoting:
    def test_scalar_itilde(self):
        Itilde = build_Itilde(np.array([[1.0], [1.0]]))
        assert Itilde.shape == (2, 1)
        assert_allclose(Itilde.toarray(), [[0.0], [1.0]])

    def test_pivots_skip_dependent_rows(self):
        A12 = np.array([[1.0, 2.0], [0.0, 0.0], [3.0, 6.0], [0.0, 1.0]])
        assert len(pivot_columns(A12)) == 2

    def test_orthogonal_R(self):
        A12 = np.random.default_rng(1).standard_normal((5, 2))
        R, Q1 = build_orthogonal_R(A12)
        assert_allclose(R @ A12, 0.0, atol=1e-12)
        assert_allclose(R @ R, R, atol=1e-12)
        assert Q1.shape == (5, 3)


class TestRankIdentities:
    @pytest.mark.parametrize(("n1", "r2", "k"), [(2, 1, 2), (4, 2, 3), (5, 1, 4), (6, 3, 5)])
    def test_counting_identity(self, n1, r2, k):
        assert counting_identity_holds(n1, r2, k)

    @pytest.mark.parametrize(("n1", "n2", "k"), [(2, 1, 2), (3, 1, 3), (4, 2, 2), (4, 2, 3)])
    def test_brute_force(self, n1, n2, k):
        report = rank_identities_check(n1, n2, k, seed=n1 + k)
        assert report.passed
        assert report.expected_rank == n1**k - (n1 - n2) ** k

    @pytest.mark.parametrize(
        ("n1", "n2", "k"), [(2, 1, 2), (3, 1, 3), (3, 2, 2), (4, 1, 2), (4, 1, 3), (5, 2, 2), (5, 2, 3), (6, 2, 3)]
    )
    def test_bordered_matrix_has_full_rank(self, n1, n2, k):
        system = random_stokes_system(n1, n2, seed=3 + n1 + k)
        report = rank_identities_check(n1, n2, k, system=system, eta=1.0)
        assert report.bordered_side == 2 * n1**k - (n1 - n2) ** k
        assert report.bordered_rank == report.bordered_side
        assert report.passed


class TestProjectedRiccati:
    def test_scalar(self):
        sys = build_scalar_example()
        coeffs = solve_projected_riccati_sparse(sys, SCALAR_EXAMPLE_ETA)
        W2 = (-1.0 + math.sqrt(11.0)) / 10.0
        assert_allclose(coeffs.W2_hat, 0.5 * W2 * np.array([[1.0, -1.0], [-1.0, 1.0]]), atol=1e-12)
        assert coeffs.diagnostics["projected_riccati_residual"] < 1e-12
        assert coeffs.kernel_defect(sys.A12) < 1e-12

    def test_rejects_input_in_constraint(self):
        with pytest.raises(ValidationFailure):
            solve_projected_riccati_sparse(random_stokes_system(4, 1, seed=0, b2_zero=False), 1.0)

    def test_rhs_order_check(self):
        sys = build_scalar_example()
        coeffs = solve_projected_riccati_sparse(sys, 1.0)
        with pytest.raises(ValueError):
            assemble_rhs_b(2, sys, coeffs.w_hat, 1.0)


class TestMonolithicEnergy:
    def test_scalar_matches_projected(self):
        sys = build_scalar_example()
        mono, coeffs = compute_future_energy_monolithic(sys, SCALAR_EXAMPLE_ETA, 5)
        proj = compute_future_energy(reduce_system(sys), SCALAR_EXAMPLE_ETA, 5)
        assert mono.method is EnergyMethod.MONOLITHIC
        for k in range(2, 6):
            assert_allclose(mono.coeffs[k], proj.coeffs[k], rtol=1e-8, atol=1e-12)
        assert coeffs.diagnostics["kernel_defect"] < 1e-10

    @pytest.mark.parametrize(("n1", "n2", "seed"), RANDOM_CASES)
    def test_random_matches_projected(self, n1, n2, seed):
        sys = random_stokes_system(n1, n2, seed=seed)
        mono, _ = compute_future_energy_monolithic(sys, 2.0, 4)
        proj = compute_future_energy(reduce_system(sys), 2.0, 4)
        for k in range(2, 5):
            assert _rel(mono.coeffs[k], proj.coeffs[k]) < 1e-8

    def test_recover_rejects_bad_length(self):
        sys = build_scalar_example()
        coeffs = solve_projected_riccati_sparse(sys, 1.0)
        with pytest.raises(ValueError):
            recover_dense_coeff(np.zeros(5), sys, coeffs.projectors)

    def test_degree_below_two(self):
        with pytest.raises(ValueError):
            compute_future_energy_monolithic(build_scalar_example(), 1.0, 1)

    def test_rejects_input_in_constraint(self):
        with pytest.raises(ValidationFailure):
            compute_future_energy_monolithic(random_stokes_system(4, 1, b2_zero=False), 1.0, 3)


class TestBorderedSolve:
    def test_iterative_matches_direct(self):
        sys = random_stokes_system(4, 1, seed=5)
        coeffs = solve_projected_riccati_sparse(sys, 1.0)
        b = assemble_rhs_b(3, sys, coeffs.w_hat, 1.0)
        direct, _ = solve_monolithic_k(3, sys, coeffs.W2_hat, 1.0, b)
        diagnostics: dict[str, float] = {}
        iterative, _ = solve_monolithic_k(
            3, sys, coeffs.W2_hat, 1.0, b, MonolithicSettings(direct_limit=1), diagnostics
        )
        assert _rel(iterative, direct) < 1e-6
        assert diagnostics["constraint_residual_3"] < 1e-8

    def test_zero_rhs(self):
        sys = build_scalar_example()
        coeffs = solve_projected_riccati_sparse(sys, 1.0)
        w, omega = solve_monolithic_k(3, sys, coeffs.W2_hat, 1.0, np.zeros(8))
        assert not np.any(w)
        assert omega.shape == (8 - 1,)

    def test_side(self):
        sys = random_stokes_system(4, 2, seed=0)
        coeffs = solve_projected_riccati_sparse(sys, 1.0)
        system = AugmentedKroneckerSystem.build(3, sys, coeffs.W2_hat, 1.0, np.zeros(64))
        assert system.side == system.expected_side(4, 2) == 2 * 64 - 8
        v = np.random.default_rng(0).standard_normal(system.side)
        assert_allclose(system.matvec(v), system.assemble() @ v, atol=1e-10)

    def test_blocks_keep_original_sparse_factors(self):
        cfg = FisherConfig(ne=8, alpha=0.1, beta=3.0, eta=30.0)
        sys = build_fisher_distributed(cfg)
        coeffs = solve_projected_riccati_sparse(sys, cfg.eta)
        system = AugmentedKroneckerSystem.build(3, sys, coeffs.W2_hat, cfg.eta, np.zeros(sys.n1**3))
        assert sp.issparse(system.L.M) and sp.issparse(system.L.E)
        assert sp.issparse(system.Mk.A) and sp.issparse(system.Mk.B)
        assert_allclose(system.L.E.toarray(), sys.E11.T)
        assert_allclose(system.Mk.A.toarray(), sys.A12)
        assert system.L.E.nnz == np.count_nonzero(sys.E11)
        matrix = system.assemble()
        assert sp.issparse(matrix)
        assert matrix.shape == (system.side, system.side)
        border = system.Mk.assemble()
        assert matrix.nnz <= 3 * system.L.M.nnz * system.L.E.nnz**2 + 2 * border.nnz

    def test_assembly_limit_from_settings(self):
        sys = random_stokes_system(3, 1, seed=2)
        settings = merge_overrides({"kway": {"dense_assembly_limit": 10}})
        with pytest.raises(ValueError, match="refusing to assemble"):
            compute_future_energy_monolithic(sys, 1.0, 3, kway=settings.kway)
        relaxed = merge_overrides({"kway": {"dense_assembly_limit": 10_000}})
        mono, _ = compute_future_energy_monolithic(sys, 1.0, 3, kway=relaxed.kway)
        assert mono.degree == 3


class TestDirectFeedback:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_reduced_feedback(self, d):
        sys = random_stokes_system(4, 1, seed=9)
        mono, coeffs = compute_future_energy_monolithic(sys, 1.5, 4)
        reduced = reduce_system(sys)
        x_d = np.array([0.3, -0.2, 0.1])
        x1 = reduced.projectors.Theta_r @ x_d
        direct = direct_feedback_eval(coeffs, sys, 1.5, x1, d)
        assert_allclose(direct, eval_feedback(mono, reduced, x_d, d), rtol=1e-8, atol=1e-12)

    def test_scalar_linear_feedback(self):
        sys = build_scalar_example()
        _, coeffs = compute_future_energy_monolithic(sys, SCALAR_EXAMPLE_ETA, 2)
        reduced = reduce_system(sys)
        x1 = reduced.projectors.Theta_r @ np.array([1.0])
        u = direct_feedback_eval(coeffs, sys, SCALAR_EXAMPLE_ETA, x1, 1)
        W2 = (-1.0 + math.sqrt(11.0)) / 10.0
        assert u[0] == pytest.approx(-SCALAR_EXAMPLE_ETA * W2 * math.sqrt(0.5))
