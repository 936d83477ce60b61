import math

import numpy as np
import pytest

from services.errors import DomainError, EigenSolverError
from services.spectral_solver import DirichletEigenSolver, default_x_max, doublewell_bound, doublewell_potential


@pytest.fixture
def solver():
    return DirichletEigenSolver()


def ou_grad(K: float):
    return lambda x: K * np.asarray(x, dtype=float)


@pytest.mark.parametrize("K", [1.0, 2.0])
def test_ou_first_eigenvalue(solver, K):
    """Test U = K x^2 / 2 gives lambda1 = K/2"""
    result = solver.dirichlet_lambda1(ou_grad(K), 10.0 / math.sqrt(K))
    assert result.lambda1 == pytest.approx(K / 2, rel=1e-4)
    assert result.residual < 1e-8
    assert result.boundary_weight < 1e-12


def test_ou_eigenvalue_with_closed_form_potential(solver):
    """Test passing U directly agrees with integrating U'"""
    integrated = solver.dirichlet_lambda1(ou_grad(1.0), 8.0)
    closed = solver.dirichlet_lambda1(ou_grad(1.0), 8.0, U=lambda x: 0.5 * np.asarray(x) ** 2)
    assert closed.lambda1 == pytest.approx(integrated.lambda1, rel=1e-5)


def test_eigenvalue_nonincreasing_in_x_max(solver):
    """Test enlarging the domain does not raise lambda1"""
    small = solver.dirichlet_lambda1(ou_grad(1.0), 2.0, n_grid=400)
    large = solver.dirichlet_lambda1(ou_grad(1.0), 6.0, n_grid=1200)
    assert large.lambda1 <= small.lambda1 * (1 + 1e-6)


def test_double_well_eigenvalue_below_bound(solver):
    """Test lambda1 of the double well L = 1, R = 4 is below 0.66938"""
    potential = doublewell_potential(1.0, 4.0)
    result = solver.dirichlet_lambda1(potential.grad, default_x_max(4.0, 1.0), U=potential.value)
    assert result.lambda1 <= doublewell_bound(1.0, 4.0)
    assert result.lambda1 > 0


def test_trial_quotient_dominates_eigenvalue(solver):
    """Test the quotient of min(sqrt(L) x, 1) on the same grid is at least lambda1"""
    potential = doublewell_potential(1.0, 4.0)
    x_max = default_x_max(4.0, 1.0)
    result = solver.dirichlet_lambda1(potential.grad, x_max, U=potential.value)
    quotient = solver.trial_rayleigh_quotient(potential.grad, x_max, result.n_grid, lambda x: np.minimum(x, 1.0), U=potential.value)
    assert quotient >= result.lambda1


def test_solver_reports_iterates_on_failure():
    """Test a zero refinement budget fails with the computed iterate"""
    solver = DirichletEigenSolver(n_grid=50, max_doublings=0)
    with pytest.raises(EigenSolverError, match="did not stabilise") as exc_info:
        solver.dirichlet_lambda1(ou_grad(1.0), 8.0)
    assert len(exc_info.value.iterates) == 1


def test_solver_rejects_x_max(solver):
    """Test x_max <= 0 is a domain error"""
    with pytest.raises(DomainError, match="x_max must be positive"):
        solver.dirichlet_lambda1(ou_grad(1.0), 0.0)


@pytest.mark.parametrize(
    "L, R, expected",
    [
        (1.0, 4.0, 0.66938),
        (1.0, 2.0, 1.5),
        (4.0, 2.0, 0.75 * math.exp(0.5) * 8.0 * 2.0 * math.exp(-2.0)),
    ],
)
def test_doublewell_bound_examples(L, R, expected):
    """Test 3/4 e^{1/2} L^{3/2} R exp(-L R^2 / 8)"""
    assert doublewell_bound(L, R) == pytest.approx(expected, rel=1e-5)


def test_doublewell_bound_requires_regime():
    """Test L R^2 < 4 is a domain error"""
    with pytest.raises(DomainError, match="L R\\^2 >= 4"):
        doublewell_bound(1.0, 1.0)


def test_doublewell_potential_inside_region():
    """Test U' = -L x and U = -L x^2 / 2 on [-R/2, R/2]"""
    potential = doublewell_potential(1.0, 4.0)
    x = np.array([-2.0, -1.0, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(potential.grad(x), -x)
    np.testing.assert_allclose(potential.value(x), -0.5 * x**2)


def test_doublewell_potential_is_c1_and_convex_outside():
    """Test U' is continuous at the ramp ends and grows with slope K_out far out"""
    potential = doublewell_potential(1.0, 4.0, ramp_width=1.0, K_out=2.0)
    for edge in (2.0, 3.0):
        left, right = potential.grad(np.array([edge - 1e-9, edge + 1e-9]))
        assert left == pytest.approx(right, abs=1e-6)
    far = potential.grad(np.array([20.0, 21.0]))
    assert far[1] - far[0] == pytest.approx(2.0)


def test_doublewell_potential_rejects_ramp():
    """Test a zero ramp width is rejected"""
    with pytest.raises(DomainError, match="ramp_width"):
        doublewell_potential(1.0, 4.0, ramp_width=0.0)
