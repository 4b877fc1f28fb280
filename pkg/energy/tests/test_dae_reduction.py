"""Tests for validation, projector construction and DAE reduction."""

from __future__ import annotations

import math

import numpy as np
import pytest
from daekron.errors import DimensionError, ValidationFailure
from energy.benchmarks import build_scalar_example, random_stokes_system
from energy.dae_reduction import (
    StokesDaeSystem,
    build_projector,
    lift_state,
    momentum_residual,
    null_space_basis,
    recover_algebraic,
    reduce_system,
    validate_stokes_dae,
)
from energy.kron_ops import kron_power
from numpy.testing import assert_allclose

SQRT_HALF = math.sqrt(0.5)


@pytest.fixture
def scalar():
    return build_scalar_example()


def _with(sys: StokesDaeSystem, **blocks) -> StokesDaeSystem:
    fields = {
        "E11": sys.E11,
        "A11": sys.A11,
        "A12": sys.A12,
        "N": sys.N,
        "B1": sys.B1,
        "B2": sys.B2,
        "C1": sys.C1,
        "name": sys.name,
    }
    fields.update(blocks)
    return StokesDaeSystem(**fields)


class TestValidation:
    def test_scalar_is_valid(self, scalar):
        report = validate_stokes_dae(scalar)
        assert report.valid
        assert "valid" in report.summary()

    def test_singular_mass_matrix(self, scalar):
        report = validate_stokes_dae(_with(scalar, E11=np.diag([1.0, 0.0])))
        assert not report.valid
        assert report.failures[0].name == "E11 invertible"

    def test_rank_deficient_constraints(self):
        sys = random_stokes_system(4, 2, seed=1)
        A12 = np.column_stack([sys.A12[:, 0], 2.0 * sys.A12[:, 0]])
        report = validate_stokes_dae(_with(sys, A12=A12))
        assert [c.name for c in report.failures] == ["A12 full column rank"]

    def test_non_finite_entries(self, scalar):
        report = validate_stokes_dae(_with(scalar, A11=np.array([[np.nan, 0.0], [0.0, -2.0]])))
        assert not report.valid
        assert "A11" in report.failures[0].detail

    def test_reduce_rejects_invalid(self, scalar):
        with pytest.raises(ValidationFailure) as info:
            reduce_system(_with(scalar, E11=np.zeros((2, 2))))
        assert info.value.report is not None

    def test_shape_mismatch(self, scalar):
        with pytest.raises(DimensionError):
            _with(scalar, B2=np.zeros((2, 1)))


class TestProjector:
    def test_scalar_projector(self, scalar):
        Pi = build_projector(scalar.E11, scalar.A12)
        assert_allclose(Pi, 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]]), atol=1e-14)

    def test_null_space_sign_convention(self, scalar):
        basis = null_space_basis(scalar.A12)
        assert_allclose(basis[:, 0], [SQRT_HALF, -SQRT_HALF], atol=1e-14)

    def test_null_space_rejects_rank_deficiency(self):
        with pytest.raises(ValidationFailure):
            null_space_basis(np.ones((3, 2)))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_projector_identities(self, seed):
        sys = random_stokes_system(6, 2, seed=seed)
        reduced = reduce_system(sys)
        for name, defect in reduced.projectors.defects(sys.A12).items():
            assert defect < 1e-10, name

    def test_no_constraints(self):
        sys = random_stokes_system(3, 0, seed=4)
        reduced = reduce_system(sys)
        assert reduced.n == 3
        assert_allclose(reduced.projectors.Theta_r, np.eye(3))


class TestReduction:
    def test_scalar_reduced_matrices(self, scalar):
        reduced = reduce_system(scalar)
        assert reduced.n == 1
        assert reduced.E_d[0, 0] == pytest.approx(1.0)
        assert reduced.A_d[0, 0] == pytest.approx(-0.5)
        assert reduced.N_d[0, 0] == pytest.approx(1.5 * SQRT_HALF)
        assert reduced.B_const[0, 0] == pytest.approx(SQRT_HALF)
        assert reduced.C_d[0, 0] == pytest.approx(-SQRT_HALF)
        assert not np.any(reduced.s)
        assert not reduced.normalized.input_coupled

    def test_reduced_field_matches_projected_dae(self):
        sys = random_stokes_system(5, 2, m=2, seed=11, b2_zero=False)
        reduced = reduce_system(sys)
        rng = np.random.default_rng(0)
        x_d = rng.standard_normal(reduced.n)
        u = rng.standard_normal(reduced.m)
        x1 = lift_state(reduced, x_d, u)

        assert np.linalg.norm(sys.constraint_residual(x1, u)) < 1e-10

        full = sys.A11 @ x1 + sys.N @ kron_power(x1, 2) + sys.B1 @ u
        expected = reduced.projectors.Theta_r.T @ full
        got = (
            reduced.A_d @ x_d
            + reduced.N_d @ kron_power(x_d, 2)
            + reduced.B_const @ u
            + reduced.G_lin @ np.kron(x_d, u)
            + reduced.s_d @ np.kron(u, u)
        )
        assert_allclose(got, expected, atol=1e-10)

    def test_normalized_divides_out_mass(self):
        reduced = reduce_system(random_stokes_system(4, 1, seed=5))
        dyn = reduced.normalized
        assert_allclose(reduced.E_d @ dyn.A, reduced.A_d, atol=1e-12)
        assert_allclose(reduced.E_d @ dyn.B, reduced.B_const, atol=1e-12)

    def test_diagnostics_recorded(self, scalar):
        diagnostics = reduce_system(scalar).diagnostics
        assert diagnostics["cond_E11"] == pytest.approx(1.0)
        assert diagnostics["projector_idempotence"] < 1e-12


class TestRecovery:
    def test_lift_state_scalar(self, scalar):
        reduced = reduce_system(scalar)
        x1 = lift_state(reduced, np.array([2.0]), np.array([0.3]))
        assert_allclose(x1, [math.sqrt(2.0), -math.sqrt(2.0)])

    def test_lift_state_dimension_check(self, scalar):
        with pytest.raises(DimensionError):
            lift_state(reduce_system(scalar), np.ones(2), np.ones(1))

    def test_recover_on_trajectory(self, scalar):
        reduced = reduce_system(scalar)
        x_d = np.array([0.4])
        u = np.array([-0.2])
        x_d_dot = reduced.A_d @ x_d + reduced.N_d @ kron_power(x_d, 2) + reduced.B_const @ u
        x1 = lift_state(reduced, x_d, u)
        x1_dot = reduced.projectors.Theta_r @ x_d_dot
        x2 = recover_algebraic(scalar, x1, x1_dot, u)
        assert x2.shape == (1,)
        assert momentum_residual(scalar, x1, x1_dot, x2, u) < 1e-12

    def test_inconsistent_state(self, scalar):
        x1 = np.zeros(2)
        x1_dot = np.array([1.0, 0.0])
        with pytest.raises(ValidationFailure):
            recover_algebraic(scalar, x1, x1_dot, np.zeros(1))
        x2 = recover_algebraic(scalar, x1, x1_dot, np.zeros(1), strict=False)
        assert x2[0] == pytest.approx(0.5)
        assert momentum_residual(scalar, x1, x1_dot, x2, np.zeros(1)) == pytest.approx(SQRT_HALF)

    def test_recover_round_trip_with_input_in_constraint(self):
        system = random_stokes_system(5, 2, m=2, seed=6, b2_zero=False)
        reduced = reduce_system(system)
        rng = np.random.default_rng(0)
        u = rng.standard_normal(2)
        x1 = lift_state(reduced, rng.standard_normal(3), u)
        x2 = rng.standard_normal(2)
        forcing = system.A11 @ x1 + system.A12 @ x2 + system.N @ kron_power(x1, 2) + system.B1 @ u
        x1_dot = np.linalg.solve(system.E11, forcing)
        assert_allclose(system.constraint_residual(x1, u), 0.0, atol=1e-12)
        recovered = recover_algebraic(system, x1, x1_dot, u)
        assert_allclose(recovered, x2, atol=1e-10)
        assert momentum_residual(system, x1, x1_dot, recovered, u) < 1e-10
