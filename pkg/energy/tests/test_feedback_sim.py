"""Tests for feedback laws, closed-loop simulation and comparison tables."""

from __future__ import annotations

import numpy as np
import pytest
from daekron.errors import DimensionError, ValidationFailure
from daekron.schemas.reports import EnergyKind
from daekron.services.solver_settings import IntegratorSettings, SweepSettings
from energy.benchmarks import SCALAR_EXAMPLE_ETA, build_scalar_example, random_stokes_system
from energy.dae_reduction import QuadraticControlSystem, lift_state, null_space_basis, reduce_system
from energy.energy_coeffs import compute_energy, compute_future_energy
from energy.feedback_sim import (
    build_feedback_law,
    compare_table,
    comparison_row,
    eval_energy,
    eval_feedback,
    ic_sweep,
    simulate_closed_loop,
)
from numpy.testing import assert_allclose

PLUS = np.array([1.0])
MINUS = np.array([-1.0])


@pytest.fixture(scope="module")
def scalar_system():
    return build_scalar_example()


@pytest.fixture(scope="module")
def scalar_reduced(scalar_system):
    return reduce_system(scalar_system)


@pytest.fixture(scope="module")
def scalar_energy(scalar_reduced):
    return compute_future_energy(scalar_reduced, SCALAR_EXAMPLE_ETA, 5)


@pytest.fixture(scope="module")
def scalar_energy6(scalar_reduced):
    return compute_future_energy(scalar_reduced, SCALAR_EXAMPLE_ETA, 6)


class TestFeedbackLaw:
    def test_linear_gain(self, scalar_energy, scalar_reduced):
        law = build_feedback_law(scalar_energy, scalar_reduced, 1)
        b = scalar_reduced.B_const[0, 0]
        W2 = scalar_energy.coeffs[2][0]
        assert law(PLUS)[0] == pytest.approx(-SCALAR_EXAMPLE_ETA * b * W2)

    def test_default_degree(self, scalar_energy, scalar_reduced):
        assert build_feedback_law(scalar_energy, scalar_reduced).degree == 4

    def test_truncate(self, scalar_energy, scalar_reduced):
        law = build_feedback_law(scalar_energy, scalar_reduced)
        low = law.truncate(2)
        assert low.degree == 2
        assert_allclose(low(PLUS), eval_feedback(scalar_energy, scalar_reduced, PLUS, 2))
        with pytest.raises(ValueError):
            law.truncate(5)

    def test_rotated_basis_gives_same_value_and_feedback(self):
        system = random_stokes_system(5, 2, seed=4)
        rotation, _ = np.linalg.qr(np.random.default_rng(9).standard_normal((3, 3)))
        reduced = reduce_system(system)
        rotated = reduce_system(system, basis=null_space_basis(system.A12) @ rotation)
        energy = compute_future_energy(reduced, 2.0, 4)
        energy_rot = compute_future_energy(rotated, 2.0, 4)
        law = build_feedback_law(energy, reduced)
        law_rot = build_feedback_law(energy_rot, rotated)
        for x_d in np.random.default_rng(1).uniform(-0.5, 0.5, size=(5, 3)):
            x_rot = rotation.T @ x_d
            assert eval_energy(energy_rot, x_rot) == pytest.approx(eval_energy(energy, x_d), rel=1e-8, abs=1e-12)
            u = law(x_d)
            assert_allclose(law_rot(x_rot), u, rtol=1e-8, atol=1e-12)
            assert_allclose(lift_state(rotated, x_rot, u), lift_state(reduced, x_d, u), atol=1e-12)

    def test_directional_derivative(self):
        reduced = reduce_system(random_stokes_system(5, 2, m=2, seed=4, b2_zero=False))
        law = build_feedback_law(compute_future_energy(reduced, 1.0, 4), reduced)
        x = np.array([0.1, -0.2, 0.15])
        v = np.array([1.0, 0.5, -0.3])
        h = 1e-6
        fd = (law(x + h * v) - law(x - h * v)) / (2 * h)
        assert_allclose(law.directional_derivative(x, v), fd, atol=1e-7)

    def test_past_energy_rejected(self, scalar_reduced):
        past = compute_energy(scalar_reduced, EnergyKind.PAST, SCALAR_EXAMPLE_ETA, 3)
        with pytest.raises(ValidationFailure):
            build_feedback_law(past, scalar_reduced)

    def test_degree_out_of_range(self, scalar_energy, scalar_reduced):
        with pytest.raises(ValueError):
            build_feedback_law(scalar_energy, scalar_reduced, 5)

    def test_eval_energy_dimension(self, scalar_energy):
        with pytest.raises(DimensionError):
            eval_energy(scalar_energy, np.zeros(2))


class TestSimulation:
    def test_origin_is_trivial(self, scalar_energy, scalar_reduced):
        law = build_feedback_law(scalar_energy, scalar_reduced, 1)
        run = simulate_closed_loop(scalar_reduced, law, np.zeros(1))
        assert run.total_cost == 0.0
        assert not run.diverged
        assert run.terminated_early

    @pytest.mark.parametrize(("x0", "expected"), [(PLUS, 0.215716), (MINUS, 0.082192)])
    def test_linear_feedback_cost(self, scalar_energy, scalar_reduced, x0, expected):
        law = build_feedback_law(scalar_energy, scalar_reduced, 1)
        run = simulate_closed_loop(scalar_reduced, law, x0)
        assert not run.diverged
        assert run.terminated_early
        assert run.total_cost == pytest.approx(expected, rel=1e-4)

    def test_divergent_run_is_flagged(self, scalar_energy, scalar_reduced):
        law = build_feedback_law(scalar_energy, scalar_reduced, 1)
        run = simulate_closed_loop(scalar_reduced, law, np.array([3.0]))
        assert run.diverged
        row = comparison_row(1, 1.0, run)
        assert row.diverged
        assert row.integral is None

    def test_dae_consistency(self, scalar_energy, scalar_reduced, scalar_system):
        law = build_feedback_law(scalar_energy, scalar_reduced, 3)
        run = simulate_closed_loop(scalar_reduced, law, PLUS, system=scalar_system)
        assert run.max_constraint_residual < 1e-12
        assert run.max_momentum_residual < 1e-10
        assert run.x1 is not None and run.x1.shape[0] == 2

    def test_dae_consistency_with_input_in_constraint(self):
        system = random_stokes_system(5, 2, m=2, seed=4, b2_zero=False)
        reduced = reduce_system(system)
        law = build_feedback_law(compute_future_energy(reduced, 1.0, 4), reduced, 3)
        run = simulate_closed_loop(reduced, law, np.array([0.2, -0.1, 0.15]), horizon=20.0, system=system)
        assert not run.diverged
        assert run.samples
        assert run.max_constraint_residual <= 1e-8
        assert run.max_momentum_residual <= 1e-6

    def test_dimension_mismatch(self, scalar_energy, scalar_reduced):
        law = build_feedback_law(scalar_energy, scalar_reduced, 1)
        with pytest.raises(DimensionError):
            simulate_closed_loop(scalar_reduced, law, np.ones(2))

    def test_linear_quadratic_value_is_exact(self):
        n = 3
        A = np.array([[-1.0, 0.5, 0.0], [0.0, -0.5, 0.3], [0.2, 0.0, -1.5]])
        system = QuadraticControlSystem(
            A=A, N=np.zeros((n, n * n)), B=np.array([[1.0], [0.0], [0.5]]), C=np.array([[1.0, -1.0, 0.5]])
        )
        rows = compare_table(system, 2.0, [1], np.array([0.4, -0.3, 0.2]))
        assert rows[0].rel_err_pct < 1e-3


class TestComparisonTable:
    def test_scalar_rows_at_plus_one(self, scalar_energy6, scalar_reduced, reference_cost):
        rows = compare_table(scalar_reduced, SCALAR_EXAMPLE_ETA, [1, 2, 3, 4, 5], PLUS, energy=scalar_energy6)
        law = build_feedback_law(scalar_energy6, scalar_reduced, 5)
        assert [r.degree for r in rows] == [1, 2, 3, 4, 5]
        assert [r.value for r in rows] == pytest.approx([0.115831, 0.165222, 0.180640, 0.18302, 0.18245], abs=5e-5)
        assert rows[0].integral == pytest.approx(0.215716, rel=1e-4)
        for row in rows:
            expected = reference_cost(scalar_reduced, law.truncate(row.degree), PLUS)
            assert row.integral == pytest.approx(expected, rel=1e-5)
        # tabulated costs sit slightly above the converged ones
        assert [r.integral for r in rows] == pytest.approx([0.21655, 0.18451, 0.18274, 0.18254, 0.18259], rel=1e-2)
        assert not any(r.diverged for r in rows)

    def test_scalar_rows_at_minus_one(self, scalar_energy6, scalar_reduced, reference_cost):
        rows = compare_table(scalar_reduced, SCALAR_EXAMPLE_ETA, [4, 5], MINUS, energy=scalar_energy6)
        law = build_feedback_law(scalar_energy6, scalar_reduced, 5)
        assert [r.value for r in rows] == pytest.approx([0.07948, 0.078907], abs=5e-5)
        for row in rows:
            expected = reference_cost(scalar_reduced, law.truncate(row.degree), MINUS)
            assert row.integral == pytest.approx(expected, rel=1e-5)
        assert rows[0].integral == pytest.approx(0.079302, rel=1e-2)

    def test_degree_five_energy_value(self, scalar_energy6):
        assert eval_energy(scalar_energy6, PLUS) == pytest.approx(0.18245, abs=5e-5)
        assert eval_energy(scalar_energy6, MINUS) == pytest.approx(0.078907, abs=5e-5)

    def test_halving_tolerances_converges(self, scalar_energy, scalar_reduced):
        law = build_feedback_law(scalar_energy, scalar_reduced, 3)
        coarse = simulate_closed_loop(scalar_reduced, law, PLUS, settings=IntegratorSettings(rtol=2e-8, atol=2e-10))
        fine = simulate_closed_loop(scalar_reduced, law, PLUS, settings=IntegratorSettings(rtol=1e-8, atol=1e-10))
        assert fine.total_cost == pytest.approx(coarse.total_cost, rel=1e-5)

    def test_energy_too_short(self, scalar_energy, scalar_reduced):
        with pytest.raises(ValidationFailure):
            compare_table(scalar_reduced, SCALAR_EXAMPLE_ETA, [3], PLUS, energy=scalar_energy.truncate(3))

    def test_no_degrees(self, scalar_reduced):
        assert compare_table(scalar_reduced, SCALAR_EXAMPLE_ETA, [], PLUS) == []

    def test_row_errors(self, scalar_energy, scalar_reduced):
        law = build_feedback_law(scalar_energy, scalar_reduced, 1)
        run = simulate_closed_loop(scalar_reduced, law, PLUS, settings=IntegratorSettings(horizon=50.0))
        row = comparison_row(1, 0.2, run)
        assert row.abs_err == pytest.approx(abs(0.2 - run.total_cost))
        assert row.rel_err_pct == pytest.approx(row.abs_err / run.total_cost * 100.0)


class TestSweep:
    def test_empty_sweep(self, scalar_reduced):
        summary = ic_sweep(scalar_reduced, SCALAR_EXAMPLE_ETA, [1, 2], SweepSettings(count=0))
        assert [d.runs for d in summary.degrees] == [0, 0]
        assert all(d.average_rel_err_pct is None for d in summary.degrees)

    def test_small_sweep(self, scalar_energy, scalar_reduced):
        sweep = SweepSettings(low=-0.5, high=0.5, count=4, seed=2, horizon=30.0)
        summary = ic_sweep(scalar_reduced, SCALAR_EXAMPLE_ETA, [1, 3], sweep, energy=scalar_energy, threads=1)
        assert summary.count == 4
        first, third = summary.degrees
        assert first.unstable == third.unstable == 0
        assert first.runs == 4
        assert third.average_rel_err_pct < first.average_rel_err_pct

    def test_large_states_diverge(self, scalar_energy, scalar_reduced):
        sweep = SweepSettings(low=3.0, high=4.0, count=3, seed=0, horizon=20.0)
        summary = ic_sweep(scalar_reduced, SCALAR_EXAMPLE_ETA, [1], sweep, energy=scalar_energy, threads=1)
        assert summary.degrees[0].unstable == 3
        assert summary.degrees[0].average_rel_err_pct is None
