"""
Divide-and-conquer CARE solver - Test Suite.

Proves:
 Group 1 - Correction right-hand side
   1.  UDUᵀ equals −δQ − δAᵀX₀ − X₀δA + X₀δFX₀ exactly

 Group 2 - Solver
   2.  Banded-derived hierarchical instances match dense_care
   3.  One level entry per internal node, children before parents
   4.  Parallel recursion finishes and gives the same solution
   5.  Trees of F and Q are rebalanced onto the tree of A
   6.  A single leaf falls back to dense_care

 Group 3 - Options
   7.  Non-positive tolerances and sizes are rejected
"""
import threading

import numpy as np
import pytest

from linalg.banded import BandedMatrix
from linalg.dense import CareProblem, dense_care
from linalg.hmatrix import hm_from_banded
from linalg.lowrank import LowRankFactor
from solvers.dac import PARALLEL_LEVELS, POOL_WORKERS, DacOptions, assemble_correction_rhs, dac_care
from utils.errors import ValidationError
from utils.generators import tridiagonal

N = 64
N_MIN = 8


@pytest.fixture
def problem(stable_banded):
    A = stable_banded(N)
    F = BandedMatrix.identity(N, 0.5)
    Q = tridiagonal(N, 0.1, 1.0)
    return A, F, Q


@pytest.fixture
def reference(problem):
    A, F, Q = problem
    X, _ = dense_care(CareProblem(A.to_dense(), F.to_dense(), Q.to_dense()))
    return X


def _hierarchical(problem, n_min=N_MIN):
    return tuple(hm_from_banded(M, n_min) for M in problem)


# ── Group 1: correction right-hand side ───────────────────────────────────────

def test_correction_rhs_is_exact(rng, spd):
    n = 12
    X0 = spd(n)
    dA = LowRankFactor(rng.standard_normal((n, 2)), rng.standard_normal((2, 2)),
                       rng.standard_normal((n, 2)))
    dF = LowRankFactor.from_symmetric(rng.standard_normal((n, 1)), np.eye(1))
    G = rng.standard_normal((n, 2))
    dQ = LowRankFactor(G, np.eye(2), G)
    U, D = assemble_correction_rhs(X0, dA, dF, dQ)
    expected = (-dQ.to_dense() - dA.to_dense().T @ X0 - X0 @ dA.to_dense()
                + X0 @ dF.to_dense() @ X0)
    np.testing.assert_allclose(U @ D @ U.T, expected, atol=1e-12)
    np.testing.assert_array_equal(D, D.T)


def test_correction_rhs_rejects_mismatch(spd):
    with pytest.raises(ValidationError):
        assemble_correction_rhs(spd(4), LowRankFactor.zeros(4, 4),
                                LowRankFactor.zeros(3, 3), LowRankFactor.zeros(4, 4))


# ── Group 2: solver ───────────────────────────────────────────────────────────

def test_matches_dense(problem, reference):
    opts = DacOptions(n_min=N_MIN, compression_tol=1e-12, eksm_tol=1e-10)
    X, report = dac_care(*_hierarchical(problem), opts)
    assert np.linalg.norm(X.to_dense() - reference) / np.linalg.norm(reference) <= 1e-8
    assert report.converged
    assert report.final_residual <= 1e-9


def test_level_entries(problem):
    X, report = dac_care(*_hierarchical(problem), DacOptions(n_min=N_MIN))
    levels = report.notes["levels"]
    assert len(levels) == 2 ** report.notes["depth"] - 1
    assert levels[-1]["level"] == 0 and levels[-1]["size"] == N
    assert all(entry["eksm_residual"] <= 1e-8 for entry in levels)
    assert report.iterations == len(levels)


def test_parallel_matches_serial(problem):
    serial, _ = dac_care(*_hierarchical(problem), DacOptions(n_min=N_MIN))
    outcome = {}

    def run():
        outcome["X"], outcome["report"] = dac_care(*_hierarchical(problem),
                                                    DacOptions(n_min=N_MIN, parallel=True))

    worker = threading.Thread(target=run, daemon=True)
    worker.start()
    worker.join(timeout=120)
    assert not worker.is_alive(), "parallel recursion did not finish"
    assert POOL_WORKERS >= 2 ** (PARALLEL_LEVELS + 1) - 2
    assert max(entry["level"] for entry in outcome["report"].notes["levels"]) == PARALLEL_LEVELS
    np.testing.assert_allclose(outcome["X"].to_dense(), serial.to_dense(), atol=1e-10)


def test_rebalances_coefficient_trees(problem, reference):
    A, F, Q = problem
    H_A = hm_from_banded(A, N_MIN)
    X, _ = dac_care(H_A, hm_from_banded(F, 2 * N_MIN), hm_from_banded(Q, 4 * N_MIN),
                    DacOptions(n_min=N_MIN))
    assert X.same_tree(H_A)
    np.testing.assert_allclose(X.to_dense(), reference, atol=1e-7)


def test_single_leaf(problem, reference):
    X, report = dac_care(*_hierarchical(problem, n_min=N), DacOptions(n_min=N))
    assert X.is_leaf
    assert report.notes["levels"] == []
    np.testing.assert_allclose(X.to_dense(), reference, atol=1e-10)


def test_skip_residual(problem):
    _, report = dac_care(*_hierarchical(problem), DacOptions(n_min=N_MIN, compute_residual=False))
    assert report.residuals == [] and report.ranks


# ── Group 3: options ──────────────────────────────────────────────────────────

@pytest.mark.parametrize("kwargs", [
    {"compression_tol": 0.0},
    {"eksm_tol": -1.0},
    {"n_min": 0},
    {"s_max": 0},
])
def test_options_validated(kwargs):
    with pytest.raises(ValidationError):
        DacOptions(**kwargs)
