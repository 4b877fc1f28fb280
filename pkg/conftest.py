"""Repository-wide test bootstrap."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

ROOT = Path(__file__).resolve().parent

for rel in ("shared/src", "energy/src", "pipeline/src"):
    path = ROOT / rel
    path_str = str(path)
    if path.is_dir() and path_str not in sys.path:
        sys.path.insert(0, path_str)


@pytest.fixture(scope="session")
def reference_cost():
    """Closed-loop cost from a separate DOP853 quadrature at rtol 1e-12, without early stopping."""
    from energy.energy_coeffs import as_dynamics

    def cost(system, law, x0, horizon=200.0):
        dyn = as_dynamics(system)

        def rhs(t, z):
            x = z[:-1]
            u = law(x)
            y = dyn.C @ x
            return np.append(dyn.vector_field(x, u), 0.5 * (y @ y + u @ u / law.eta))

        x0 = np.asarray(x0, dtype=float).ravel()
        sol = solve_ivp(rhs, (0.0, horizon), np.append(x0, 0.0), method="DOP853", rtol=1e-12, atol=1e-14)
        assert sol.success
        return float(sol.y[-1, -1])

    return cost
