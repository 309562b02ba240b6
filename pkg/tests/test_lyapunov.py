"""
Banded Lyapunov solvers - Test Suite.

Proves:
 Group 1 - GMRES
   1.  Converged iterates match scipy's dense Lyapunov solver
   2.  Iterate bandwidth obeys bw(RHS) + (j − 1)·bw(A_cl)
   3.  A zero right-hand side returns immediately
   4.  The returned residual is the exact residual of the returned X

 Group 2 - CG
   5.  Symmetric stable A_cl: CG matches the dense solution
   6.  An unstable A_cl raises NotPositiveDefiniteError
"""
import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from linalg.banded import BandedMatrix
from solvers.lyapunov import cg_lyap, gmres_lyap, lyap_apply
from utils.errors import NotPositiveDefiniteError, ValidationError


def _dense_lyap(A_cl: BandedMatrix, rhs: BandedMatrix) -> np.ndarray:
    return solve_continuous_lyapunov(A_cl.to_dense().T, rhs.to_dense())


@pytest.fixture
def rhs():
    return BandedMatrix.from_diagonals(20, {-1: 0.2, 0: -1.0, 1: 0.2}, symmetric=True)


# ── Group 1: GMRES ────────────────────────────────────────────────────────────

def test_gmres_matches_dense(stable_banded, rhs):
    A_cl = stable_banded(20)
    result = gmres_lyap(A_cl, rhs, stop_norm=1e-12, max_iters=100)
    np.testing.assert_allclose(result.X.to_dense(), _dense_lyap(A_cl, rhs), atol=1e-9)
    assert result.X.symmetric
    assert not result.stagnated


def test_gmres_bandwidth_law(stable_banded, rhs):
    A_cl = stable_banded(20)
    for iters in (1, 2, 4):
        result = gmres_lyap(A_cl, rhs, stop_norm=1e-300, min_iters=iters, max_iters=iters)
        bound = rhs.measured_bandwidth() + (result.iterations - 1) * A_cl.measured_bandwidth()
        assert result.X.measured_bandwidth() <= bound


def test_zero_rhs_returns_zero(stable_banded):
    result = gmres_lyap(stable_banded(8), BandedMatrix.zeros(8), stop_norm=1.0)
    assert result.iterations == 0
    assert result.X.frobenius_norm() == 0.0


def test_residual_is_exact(stable_banded, rhs):
    A_cl = stable_banded(20)
    result = gmres_lyap(A_cl, rhs, stop_norm=1e-3, min_iters=1)
    expected = lyap_apply(A_cl, result.X) - rhs
    np.testing.assert_allclose(result.residual.to_dense(), expected.to_dense(), atol=1e-14)
    assert result.residual.frobenius_norm() <= 1e-3 * 1.01


def test_stop_norm_validated(stable_banded, rhs):
    with pytest.raises(ValidationError):
        gmres_lyap(stable_banded(20), rhs, stop_norm=0.0)
    with pytest.raises(ValidationError):
        cg_lyap(stable_banded(20), rhs, stop_norm=-1.0)


# ── Group 2: CG ───────────────────────────────────────────────────────────────

def test_cg_matches_dense(rhs):
    A_cl = BandedMatrix.from_diagonals(20, {-1: 1.0, 0: -4.0, 1: 1.0}, symmetric=True)
    result = cg_lyap(A_cl, rhs, stop_norm=1e-12, max_iters=100)
    np.testing.assert_allclose(result.X.to_dense(), _dense_lyap(A_cl, rhs), atol=1e-10)
    assert result.residual.frobenius_norm() <= 1e-10


def test_cg_rejects_unstable_operator(rhs):
    with pytest.raises(NotPositiveDefiniteError):
        cg_lyap(BandedMatrix.identity(20), rhs, stop_norm=1e-8)
