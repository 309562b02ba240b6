"""
Truncated inexact Newton-Kleinman - Test Suite.

Proves:
 Group 1 - Convergence
   1.  Line-search and κ instances match dense_care, also at n = 200
   2.  The correction step form converges to the same solution as the direct default
   3.  Symmetric A with scaled-identity F runs CG inner solves
   4.  Every outer step respects (it − 1)·β_cl + β_f + β_q + 2s_k
   5.  Iterates stay positive semidefinite; an indefinite one raises ConvergenceError
   6.  With adaptive forcing off, inner solves stop at λ_min(Q)
   7.  Exhausting k_max raises ConvergenceError carrying the partial report

 Group 2 - Building blocks
   8.  line_search minimizes the exact quartic
   9.  stabilizing_init returns 0 for stable A and a stabilizing c·I otherwise
  10.  gmres_iter_bound is a nonnegative count, capped to small n

 Group 3 - Validation
  11.  Option ranges and mode names are checked
  12.  Q without a positive definite part is rejected
"""
import math

import numpy as np
import pytest

from linalg.banded import BandedMatrix
from linalg.dense import CareProblem, dense_care, riccati_residual
import solvers.tink as tink_module
from solvers.tink import (
    TinkOptions,
    gmres_iter_bound,
    is_stable,
    line_search,
    stabilizing_init,
    tink,
)
from utils.errors import ConvergenceError, SizeCapError, ValidationError
from utils.generators import kappa_instance, laplacian_1d, line_search_instance, tridiagonal

N = 30


def _dense_solution(A, F, Q):
    X, _ = dense_care(CareProblem(A.to_dense(), F.to_dense(), Q.to_dense()))
    return X


def _rel(X, reference):
    return np.linalg.norm(X.to_dense() - reference) / np.linalg.norm(reference)


# ── Group 1: convergence ──────────────────────────────────────────────────────

def test_line_search_instance_matches_dense():
    A, F, Q = line_search_instance(N)
    X, report = tink(A, F, Q, TinkOptions(tol=1e-10))
    assert report.converged
    assert _rel(X, _dense_solution(A, F, Q)) <= 1e-6
    _, rel = riccati_residual(CareProblem.from_banded(A, F, Q), X)
    assert rel <= 1e-9
    assert report.notes["steps"][0]["linesearch_accepted"] is not None


@pytest.mark.parametrize("kappa", [1.0, 1e2])
def test_kappa_instance_matches_dense(kappa):
    A, F, Q = kappa_instance(N, kappa)
    X, report = tink(A, F, Q, TinkOptions(tol=1e-10, linesearch="all"))
    assert _rel(X, _dense_solution(A, F, Q)) <= 1e-6
    assert all(step["linesearch_accepted"] is not None for step in report.notes["steps"])


def test_correction_step_form():
    A, F, Q = line_search_instance(N)
    direct, _ = tink(A, F, Q, TinkOptions(tol=1e-10))
    correction, _ = tink(A, F, Q, TinkOptions(tol=1e-10, step_form="correction"))
    np.testing.assert_allclose(correction.to_dense(), direct.to_dense(), atol=1e-7)


def test_cg_inner_solver_for_symmetric_problems():
    A = laplacian_1d(N)
    X, report = tink(A, BandedMatrix.identity(N), tridiagonal(N, 0.1), TinkOptions(tol=1e-10))
    assert {step["inner_solver"] for step in report.notes["steps"]} == {"cg"}
    assert X.symmetric


def test_bandwidth_law_and_truncation():
    A, F, Q = line_search_instance(N)
    _, report = tink(A, F, Q, TinkOptions(tol=1e-10, s0=2, s_step=2))
    for step in report.notes["steps"]:
        assert step["bandwidth_hat"] <= step["bandwidth_bound"]
        assert step["bandwidth"] <= step["s"]
        assert step["s"] == N - 1 or (step["s"] - 2) % 2 == 0


def test_direct_bandwidth_bound_formula():
    A, F, Q = line_search_instance(N)
    _, report = tink(A, F, Q, TinkOptions(tol=1e-10, s0=2, s_step=2))
    previous = 0
    for step in report.notes["steps"]:
        it = step["inner_iterations"]
        assert it > 0
        assert step["bandwidth_bound"] == (it - 1) * step["beta_cl"] + 1 + 1 + 2 * previous
        assert step["bandwidth_bound_nominal"] == (it - 1) * step["beta_a"] + 1 + 1 + 2 * previous
        assert step["bandwidth_hat"] <= step["bandwidth_bound"]
        previous = step["bandwidth"]


def test_iterates_stay_positive_semidefinite():
    A, F, Q = line_search_instance(N)
    X, report = tink(A, F, Q, TinkOptions(tol=1e-10))
    scale = np.linalg.norm(X.to_dense(), 2)
    for step in report.notes["steps"]:
        assert step["lambda_min_x"] is not None
        assert step["lambda_min_x"] >= -1e-8 * scale


def test_indefinite_iterate_raises(monkeypatch):
    A, F, Q = line_search_instance(N)
    monkeypatch.setattr(tink_module, "greedy_truncate",
                        lambda X_cand, ctx, opts, estimator: (-1.0 * X_cand, 0, 1.0, 1.0))
    with pytest.raises(ConvergenceError, match="indefinite") as excinfo:
        tink(A, F, Q, TinkOptions(tol=1e-10))
    assert excinfo.value.report.notes["steps"] == []


def test_plain_stopping_rule_without_forcing():
    A, F, Q = line_search_instance(N)
    with pytest.raises(ConvergenceError) as excinfo:
        tink(A, F, Q, TinkOptions(tol=1e-300, k_max=3, adaptive_forcing=False))
    report = excinfo.value.report
    assert len(report.notes["steps"]) == 3
    assert all(step["stop_norm"] == report.notes["lambda_min_q"] for step in report.notes["steps"])

    _, forced = tink(A, F, Q, TinkOptions(tol=1e-10))
    assert forced.notes["steps"][-1]["stop_norm"] < forced.notes["lambda_min_q"]


def test_line_search_instance_at_n200():
    n = 200
    A, F, Q = line_search_instance(n)
    X, report = tink(A, F, Q, TinkOptions(tol=1e-10))
    assert report.converged
    assert _rel(X, _dense_solution(A, F, Q)) <= 1e-6
    assert all(step["bandwidth_hat"] <= step["bandwidth_bound"] for step in report.notes["steps"])


def test_untruncated_run():
    A, F, Q = line_search_instance(N)
    X, report = tink(A, F, Q, TinkOptions(tol=1e-10, truncation=False, linesearch="none"))
    assert all(step["s"] == N - 1 for step in report.notes["steps"])
    assert all(step["lambda"] == 1.0 for step in report.notes["steps"])
    assert _rel(X, _dense_solution(A, F, Q)) <= 1e-6


def test_k_max_exhaustion_keeps_report():
    A, F, Q = line_search_instance(N)
    with pytest.raises(ConvergenceError) as excinfo:
        tink(A, F, Q, TinkOptions(tol=1e-300, k_max=2))
    report = excinfo.value.report
    assert report is not None and report.iterations == 2
    assert len(report.notes["steps"]) == 2


# ── Group 2: building blocks ──────────────────────────────────────────────────

def test_line_search_quartic():
    one, zero = np.ones((1, 1)), np.zeros((1, 1))
    lam, accepted = line_search(one, zero, one)
    assert lam == pytest.approx((math.sqrt(5.0) - 1.0) / 2.0, abs=1e-6)
    assert accepted


def test_line_search_full_step_and_rejection():
    R = np.eye(3)
    lam, accepted = line_search(R, np.zeros((3, 3)), np.zeros((3, 3)))
    assert lam == 1.0 and accepted
    lam, accepted = line_search(R, R, np.zeros((3, 3)))
    assert lam == 1.0 and not accepted
    with pytest.raises(ValidationError):
        line_search(np.zeros((2, 2)), R[:2, :2], R[:2, :2])


def test_stabilizing_init():
    F = BandedMatrix.identity(N)
    Q = tridiagonal(N, 0.1)
    stable = laplacian_1d(N)
    assert stabilizing_init(stable, F, Q).frobenius_norm() == 0.0

    unstable = stable.shifted(1.0)
    assert not is_stable(unstable)
    X0 = stabilizing_init(unstable, F, Q)
    assert X0.measured_bandwidth() == 0
    assert is_stable(unstable - F @ X0)


def test_unstable_problem_solves():
    A = laplacian_1d(N).shifted(1.0)
    F = BandedMatrix.identity(N)
    Q = tridiagonal(N, 0.1)
    X, _ = tink(A, F, Q, TinkOptions(tol=1e-10))
    assert _rel(X, _dense_solution(A, F, Q)) <= 1e-6


def test_gmres_iter_bound():
    n = 12
    A, F, Q = laplacian_1d(n), BandedMatrix.identity(n), tridiagonal(n, 0.1)
    p = CareProblem.from_banded(A, F, Q)
    bound = gmres_iter_bound(p, _dense_solution(A, F, Q))
    assert isinstance(bound, int) and bound >= 0
    big = laplacian_1d(201)
    with pytest.raises(SizeCapError):
        gmres_iter_bound(CareProblem.from_banded(big, BandedMatrix.identity(201), tridiagonal(201, 0.1)),
                         np.zeros((201, 201)))


# ── Group 3: validation ───────────────────────────────────────────────────────

@pytest.mark.parametrize("kwargs", [
    {"alpha": 0.0},
    {"zeta": 1.0},
    {"s0": -1},
    {"s_step": 0},
    {"tol": 0.0},
    {"k_max": 0},
    {"linesearch": "sometimes"},
    {"step_form": "newton"},
    {"inner": "bicg"},
])
def test_options_validated(kwargs):
    with pytest.raises(ValidationError):
        TinkOptions(**kwargs)


def test_semidefinite_q_rejected():
    A = laplacian_1d(10)
    Q = BandedMatrix.from_diagonals(10, {0: np.r_[np.ones(9), 0.0]}, symmetric=True)
    with pytest.raises(ValidationError):
        tink(A, BandedMatrix.identity(10), Q)
