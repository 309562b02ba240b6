"""
State-dependent Riccati feedback - Test Suite.

Proves:
 Group 1 - Linear models
   1.  A scalar model reproduces the LQR gain 1 + √2
   2.  The closed loop decays at rate √2 and accumulates the LQR cost

 Group 2 - Allen-Cahn
   3.  tink and dense_care agree with the closed form at a nonzero state
   4.  IMEX simulation: control drives the state to zero, the free system does not

 Group 3 - Cucker-Smale
   5.  Reduced closed form matches dense_care and the divide-and-conquer solver
   6.  The reduced feedback equals the full 2N-dimensional SDRE control, sorted or not
   7.  Sorting positions lowers the offdiagonal rank of the solution

 Group 4 - Validation
   8.  Solver names, integrator options and model parameters are checked
"""
import math

import numpy as np
import pytest

from analysis.offdiag import qsrank
from linalg.dense import dense_care
from sdre.feedback import FeedbackSolver, IntegratorOptions, integrate_closed_loop, sdre_feedback
from sdre.models import (
    SdreModel,
    allen_cahn_model,
    cucker_smale_model,
    interaction_matrix,
    linear_model,
)
from solvers.dac import DacOptions
from solvers.tink import TinkOptions
from utils.errors import IntegrationError, ValidationError


# ── Group 1: linear models ────────────────────────────────────────────────────

def test_scalar_lqr_gain():
    model = linear_model(1.0, 1.0, 1.0, 1.0)
    u = sdre_feedback(model, np.array([2.0]))
    assert u[0] == pytest.approx(-2.0 * (1.0 + math.sqrt(2.0)), rel=1e-10)


def test_scalar_closed_loop():
    model = linear_model(1.0, 1.0, 1.0, 1.0)
    T = 5.0
    trajectory = integrate_closed_loop(model, np.array([1.0]), T, IntegratorOptions(dt=0.05))
    assert trajectory.notes["method"] == "rk45"
    assert trajectory.final_state[0] == pytest.approx(math.exp(-math.sqrt(2.0) * T), rel=1e-5)
    expected = (1.0 + math.sqrt(2.0)) * (1.0 - math.exp(-2.0 * math.sqrt(2.0) * T))
    assert trajectory.total_cost == pytest.approx(expected, rel=1e-2)
    assert np.all(np.diff(trajectory.running_cost) >= 0)
    assert len(trajectory.stats) == len(trajectory.times)


# ── Group 2: Allen-Cahn ───────────────────────────────────────────────────────

@pytest.fixture
def allen_cahn():
    return allen_cahn_model(40)


def test_allen_cahn_solvers_agree(allen_cahn):
    y = allen_cahn.initial_state()
    closed = allen_cahn.closed_form(y)
    X_tink, stats = FeedbackSolver("tink", TinkOptions(tol=1e-10)).solve(allen_cahn, y)
    X_dense, _ = FeedbackSolver("dense").solve(allen_cahn, y)
    scale = np.linalg.norm(closed)
    assert np.linalg.norm(X_tink.to_dense() - closed) / scale <= 1e-6
    assert np.linalg.norm(X_dense - closed) / scale <= 1e-9
    assert stats.structure == X_tink.measured_bandwidth()


def test_allen_cahn_feedback_uses_gamma(allen_cahn):
    y = allen_cahn.initial_state()
    X = allen_cahn.closed_form(y)
    np.testing.assert_allclose(allen_cahn.control(y, X), -X @ y / allen_cahn.gamma)
    assert allen_cahn.gamma == pytest.approx(0.1 * allen_cahn.dx)


def test_allen_cahn_stabilization(allen_cahn):
    y0 = allen_cahn.initial_state()
    opts = IntegratorOptions(dt=0.05)
    controlled = integrate_closed_loop(allen_cahn, y0, 2.0, opts, solver="closed_form")
    free = integrate_closed_loop(allen_cahn, y0, 2.0, opts, controlled=False)
    assert controlled.notes["method"] == "imex"
    assert np.abs(controlled.final_state).max() < 0.05
    assert np.abs(free.final_state).max() > 0.5
    assert free.stats == [] and np.all(free.controls == 0.0)


# ── Group 3: Cucker-Smale ─────────────────────────────────────────────────────

def test_interaction_matrix_rows_sum_to_zero(rng):
    M = interaction_matrix(rng.uniform(size=7))
    np.testing.assert_allclose(M.sum(axis=1), 0.0, atol=1e-15)
    np.testing.assert_allclose(M, M.T)


def test_cucker_smale_reduced_solvers(rng):
    model = cucker_smale_model(32, n_min=8)
    state = model.initial_state(rng)
    closed = model.closed_form(state)
    X_dense, _ = dense_care(model.dense_problem(state))
    np.testing.assert_allclose(X_dense, closed, atol=1e-10)
    solver = FeedbackSolver("dac", dac_opts=DacOptions(n_min=8))
    X_dac, stats = solver.solve(model, state)
    np.testing.assert_allclose(X_dac.to_dense(), closed, atol=1e-7)
    assert stats.structure == X_dac.rank


@pytest.mark.parametrize("sort", [True, False])
def test_reduced_feedback_matches_full_sdre(rng, sort):
    model = cucker_smale_model(8, sort=sort)
    state = model.initial_state(rng)
    full = SdreModel.care_problem(model, state)
    X_full, _ = dense_care(full)
    _, B, _, R = model.coefficients(state)
    expected = -np.linalg.solve(R, B.T) @ X_full @ state
    reduced = model.feedback_law(state, model.closed_form(state))(state)
    np.testing.assert_allclose(reduced, expected, atol=1e-9)


def test_sorting_lowers_rank(rng):
    sorted_model = cucker_smale_model(48, sort=True)
    unsorted_model = cucker_smale_model(48, sort=False)
    state = sorted_model.initial_state(rng)
    sorted_rank = qsrank(sorted_model.closed_form(state), 1e-8)
    unsorted_rank = qsrank(unsorted_model.closed_form(state), 1e-8)
    assert sorted_rank <= unsorted_rank


def test_cucker_smale_closed_loop(rng):
    model = cucker_smale_model(6)
    y0 = model.initial_state(rng)
    trajectory = integrate_closed_loop(model, y0, 2.0, IntegratorOptions(dt=0.1), solver="closed_form")
    assert trajectory.notes["method"] == "rk45"
    assert np.linalg.norm(trajectory.final_state) < np.linalg.norm(y0)


# ── Group 4: validation ───────────────────────────────────────────────────────

def test_solver_and_option_validation(rng):
    with pytest.raises(ValidationError):
        FeedbackSolver("newton")
    with pytest.raises(ValidationError):
        IntegratorOptions(dt=0.0)
    with pytest.raises(ValidationError):
        IntegratorOptions(method="euler")
    model = cucker_smale_model(4)
    state = model.initial_state(rng)
    with pytest.raises(ValidationError):
        FeedbackSolver("tink").solve(model, state)
    with pytest.raises(ValidationError):
        integrate_closed_loop(model, state, 1.0, IntegratorOptions(method="imex"))
    with pytest.raises(IntegrationError):
        integrate_closed_loop(model, state, 1.0, solver="tink")


def test_model_validation():
    with pytest.raises(ValidationError):
        allen_cahn_model(2)
    with pytest.raises(ValidationError):
        cucker_smale_model(1)
    with pytest.raises(ValidationError):
        linear_model(1.0, 1.0, 1.0, -1.0)
    with pytest.raises(ValidationError):
        integrate_closed_loop(linear_model(1.0, 1.0, 1.0, 1.0), np.ones(2), 1.0)
