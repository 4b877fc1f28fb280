"""Tests for the energy coefficient recursion and the HJB residual checks."""

from __future__ import annotations

import math

import numpy as np
import pytest
from daekron.errors import DimensionError
from daekron.schemas.reports import EnergyKind
from energy.benchmarks import SCALAR_EXAMPLE_ETA, build_scalar_example, random_stokes_system
from energy.dae_reduction import reduce_system
from energy.energy_coeffs import (
    compute_energy,
    compute_future_energy,
    compute_past_energy,
    hjb_residual,
    hjb_residual_ladder,
    optimal_input,
)
from energy.kron_ops import symmetrize_coeff
from energy.poly_algebra import EnergyPolynomial
from numpy.testing import assert_allclose

W2_SCALAR = (-1.0 + math.sqrt(11.0)) / 10.0


@pytest.fixture(scope="module")
def scalar_reduced():
    return reduce_system(build_scalar_example())


@pytest.fixture(scope="module")
def scalar_future(scalar_reduced):
    return compute_future_energy(scalar_reduced, SCALAR_EXAMPLE_ETA, 5)


class TestScalarFutureEnergy:
    def test_quadratic_coefficient(self, scalar_future):
        assert scalar_future.coeffs[2][0] == pytest.approx(W2_SCALAR, abs=1e-12)

    def test_higher_coefficients(self, scalar_future):
        assert scalar_future.coeffs[3][0] == pytest.approx(0.098781, abs=2e-6)
        assert scalar_future.coeffs[4][0] == pytest.approx(0.030836, abs=2e-6)

    @pytest.mark.parametrize(
        ("degree", "plus", "minus"),
        [(2, 0.115831, 0.115831), (3, 0.165222, 0.066440), (4, 0.180640, 0.081859)],
    )
    def test_values(self, scalar_future, degree, plus, minus):
        poly = scalar_future.truncate(degree)
        assert poly.value(np.array([1.0])) == pytest.approx(plus, abs=5e-5)
        assert poly.value(np.array([-1.0])) == pytest.approx(minus, abs=5e-5)

    def test_diagnostics(self, scalar_future):
        assert scalar_future.diagnostics["riccati_residual"] < 1e-12
        assert scalar_future.diagnostics["closed_loop_abscissa"] < 0
        assert scalar_future.diagnostics["kway_residual_5"] < 1e-10

    def test_optimal_input_is_linear_near_origin(self, scalar_future, scalar_reduced):
        x = np.array([1e-4])
        u = optimal_input(scalar_future, scalar_reduced, x)
        b = scalar_reduced.B_const[0, 0]
        assert u[0] == pytest.approx(-SCALAR_EXAMPLE_ETA * b * W2_SCALAR * 1e-4, rel=1e-3)


class TestPastEnergy:
    def test_scalar_quadratic(self, scalar_reduced):
        poly = compute_past_energy(scalar_reduced, SCALAR_EXAMPLE_ETA, 2)
        assert poly.coeffs[2][0] == pytest.approx(1.0 + math.sqrt(11.0), abs=1e-10)
        assert poly.kind is EnergyKind.PAST

    def test_scalar_ladder(self, scalar_reduced):
        poly = compute_past_energy(scalar_reduced, SCALAR_EXAMPLE_ETA, 4)
        assert hjb_residual_ladder(poly, scalar_reduced, count=2).bounded


class TestHjbResidual:
    @pytest.mark.parametrize("degree", [2, 3, 4, 5])
    def test_scalar_ladder_bounded(self, scalar_future, scalar_reduced, degree):
        report = hjb_residual_ladder(scalar_future.truncate(degree), scalar_reduced, count=2)
        assert report.bounded
        assert report.degree == degree

    def test_residual_order(self, scalar_reduced, scalar_future):
        poly = scalar_future.truncate(3)
        small = abs(hjb_residual(poly, scalar_reduced, np.array([1e-2])))
        smaller = abs(hjb_residual(poly, scalar_reduced, np.array([5e-3])))
        # fourth-order remainder
        assert smaller / small == pytest.approx(1.0 / 16.0, rel=0.1)

    @pytest.mark.parametrize("kind", [EnergyKind.FUTURE, EnergyKind.PAST])
    def test_random_system_ladder(self, kind):
        reduced = reduce_system(random_stokes_system(5, 2, m=2, seed=8, b2_zero=False))
        poly = compute_energy(reduced, kind, 2.0, 4)
        assert poly.n == 3
        assert hjb_residual_ladder(poly, reduced, count=4, seed=1).bounded

    def test_dimension_mismatch(self, scalar_future):
        reduced = reduce_system(random_stokes_system(4, 1, seed=2))
        with pytest.raises(DimensionError):
            hjb_residual(scalar_future, reduced, np.zeros(3))


class TestEnergyPolynomial:
    def test_coefficients_are_symmetric(self):
        reduced = reduce_system(random_stokes_system(4, 1, seed=6))
        poly = compute_future_energy(reduced, 1.0, 4)
        for k, c in poly.coeffs.items():
            assert_allclose(symmetrize_coeff(c, poly.n, k), c, atol=1e-12)

    def test_gradient_matches_finite_difference(self):
        reduced = reduce_system(random_stokes_system(4, 1, seed=6))
        poly = compute_future_energy(reduced, 1.0, 4)
        x = np.array([0.2, -0.1, 0.3])
        h = 1e-6
        fd = np.array([(poly.value(x + h * e) - poly.value(x - h * e)) / (2 * h) for e in np.eye(3)])
        assert_allclose(poly.gradient(x), fd, atol=1e-8)

    def test_truncate_bounds(self, scalar_future):
        with pytest.raises(ValueError):
            scalar_future.truncate(6)
        with pytest.raises(ValueError):
            scalar_future.truncate(1)

    def test_rejects_bad_lengths(self):
        with pytest.raises(DimensionError):
            EnergyPolynomial(kind=EnergyKind.FUTURE, eta=1.0, n=2, coeffs={2: np.zeros(3)})
        with pytest.raises(DimensionError):
            EnergyPolynomial(kind=EnergyKind.FUTURE, eta=1.0, n=2, coeffs={3: np.zeros(8)})

    def test_degree_below_two(self, scalar_reduced):
        with pytest.raises(ValueError):
            compute_future_energy(scalar_reduced, 1.0, 1)

    def test_observability_energy(self, scalar_reduced):
        poly = compute_future_energy(scalar_reduced, 0.0, 3)
        # A_d = -1/2, C_d^2 = 1/2 gives W2 = 1/2
        assert poly.coeffs[2][0] == pytest.approx(0.5)
