"""Extended Krylov subspace method for CAREs with low-rank constant term.

Solves A_clᵀ·δX + δX·A_cl − δX·F·δX = U·D·Uᵀ by Galerkin projection onto
span{U, A_cl⁻ᵀU, A_clᵀU, A_cl⁻²ᵀU, ...} and returns δX = U_s·Y·U_sᵀ.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve, qr, svd

from linalg.banded import BandedMatrix
from linalg.dense import CareProblem, SolveReport, dense_care
from linalg.hmatrix import HMatrix
from linalg.lowrank import LowRankFactor
from utils.checks import symmetric
from utils.errors import BreakdownError, ConvergenceError, SingularMatrixError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_S_MAX = 100
DEFLATION_TOL = 1e-12


class _TransposedOperator:
    """Products and solves with A_clᵀ for dense, banded and hierarchical A_cl."""

    def __init__(self, A_cl):
        if isinstance(A_cl, (HMatrix, BandedMatrix)):
            self._At = A_cl.T
            self._lu = None
        else:
            self._At = np.asarray(A_cl, dtype=float).T
            lu, piv = lu_factor(self._At, check_finite=False)
            if np.abs(np.diag(lu)).min() <= np.finfo(float).eps * np.abs(self._At).sum(axis=0).max():
                raise SingularMatrixError("closed-loop matrix is singular")
            self._lu = (lu, piv)
        self.n = self._At.shape[0]

    def apply(self, V: np.ndarray) -> np.ndarray:
        return np.asarray(self._At @ V)

    def solve(self, V: np.ndarray) -> np.ndarray:
        if V.shape[1] == 0:
            return V.copy()
        if self._lu is not None:
            return lu_solve(self._lu, V, check_finite=False)
        return self._At.solve(V)


def _orthonormalize(W: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Two passes of block Gram-Schmidt against ``basis``, then SVD deflation."""
    reference = np.linalg.norm(W)
    if W.shape[1] == 0 or reference == 0.0:
        return W[:, :0]
    for _ in range(2):
        if basis.shape[1]:
            W = W - basis @ (basis.T @ W)
    u, s, _ = svd(W, full_matrices=False, check_finite=False)
    return u[:, s > DEFLATION_TOL * reference]


@dataclass
class EksmState:
    """Projected quantities of the current extended Krylov space.

    Args:
        basis: Orthonormal U_s, n×k
        At_basis: A_clᵀ·U_s
        U: Right-hand side factor
        D: Right-hand side core
        Y: Projected solution, k×k
        F_proj: U_sᵀ·F·U_s
    """

    basis: np.ndarray
    At_basis: np.ndarray
    U: np.ndarray
    D: np.ndarray
    Y: np.ndarray
    F_proj: np.ndarray


def eksm_residual(state: EksmState) -> float:
    """Frobenius norm of A_clᵀδX + δXA_cl − δXFδX − UDUᵀ for δX = U_s·Y·U_sᵀ.

    The residual equals W·M·Wᵀ with W = [U_s, A_clᵀU_s, U] and
    M = [[−Y·F_s·Y, Y, 0], [Y, 0, 0], [0, 0, −D]], so its norm is
    ‖R_W·M·R_Wᵀ‖_F for the triangular factor R_W of W.
    """
    k = state.basis.shape[1]
    t = state.U.shape[1]
    W = np.hstack([state.basis, state.At_basis, state.U])
    M = np.zeros((2 * k + t, 2 * k + t))
    if k:
        M[:k, :k] = -state.Y @ state.F_proj @ state.Y
        M[:k, k:2 * k] = state.Y
        M[k:2 * k, :k] = state.Y
    M[2 * k:, 2 * k:] = -state.D
    if W.shape[1] == 0:
        return 0.0
    _, R = qr(W, mode="economic", check_finite=False)
    return float(np.linalg.norm(R @ M @ R.T))


def _rhs_norm(U: np.ndarray, D: np.ndarray) -> float:
    if U.shape[1] == 0:
        return 0.0
    _, R = qr(U, mode="economic", check_finite=False)
    return float(np.linalg.norm(R @ D @ R.T))


@symmetric("D", tol=1e-12)
def eksm_care(A_cl, F, U: np.ndarray, D: np.ndarray, tol: float = DEFAULT_TOL,
              s_max: int = DEFAULT_S_MAX, monitor: Optional[Callable[[int, EksmState], None]] = None
              ) -> Tuple[LowRankFactor, SolveReport]:
    """Low-rank solution of A_clᵀδX + δXA_cl − δXFδX = UDUᵀ.

    Args:
        A_cl: Stable closed-loop matrix (dense, BandedMatrix or HMatrix)
        F: Symmetric quadratic coefficient in any format supporting ``@``
        U: n×t right-hand side factor
        D: Symmetric t×t core
        tol: Target relative residual ‖𝓡‖_F / ‖UDUᵀ‖_F
        s_max: Maximum order of the extended Krylov space
        monitor: Called as monitor(s, state) after each projected solve

    Returns:
        Symmetric factor U_s·Y·U_sᵀ and the SolveReport
    """
    start = time.perf_counter()
    U = np.atleast_2d(np.asarray(U, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n, t = U.shape
    if D.shape != (t, t):
        raise ValidationError(f"D has shape {D.shape}, expected {(t, t)}")
    if tol <= 0 or s_max < 1:
        raise ValidationError("tol must be positive and s_max at least 1")
    D = 0.5 * (D + D.T)
    report = SolveReport("eksm")

    rhs_norm = _rhs_norm(U, D)
    if rhs_norm == 0.0:
        report.iterations = 1
        report.record(0.0, 0)
        report.converged = True
        report.wall_time = time.perf_counter() - start
        return LowRankFactor.zeros(n, symmetric=True), report

    op = _TransposedOperator(A_cl)
    if op.n != n:
        raise ValidationError(f"A_cl has size {op.n}, U has {n} rows")

    empty = np.zeros((n, 0))
    positive = _orthonormalize(U, empty)
    negative = _orthonormalize(op.solve(U), positive)
    basis = np.hstack([positive, negative])
    At_basis = np.hstack([op.apply(positive), op.apply(negative)])
    At_positive = At_basis[:, : positive.shape[1]]
    F_basis = np.asarray(F @ basis)

    for s in range(1, s_max + 1):
        T = At_basis.T @ basis
        F_proj = basis.T @ F_basis
        C = basis.T @ U
        Q_proj = -(C @ D @ C.T)
        projected = CareProblem(T, 0.5 * (F_proj + F_proj.T), 0.5 * (Q_proj + Q_proj.T),
                                check_psd=False)
        Y, inner = dense_care(projected)
        state = EksmState(basis, At_basis, U, D, Y, projected.F)
        if monitor is not None:
            monitor(s, state)
        residual = eksm_residual(state) / rhs_norm
        report.iterations = s
        report.record(residual, basis.shape[1])
        logger.debug(f"eksm: s={s} dim={basis.shape[1]} residual={residual:.3e}")
        if residual <= tol:
            report.converged = True
            report.notes["basis_dim"] = basis.shape[1]
            report.wall_time = time.perf_counter() - start
            return LowRankFactor.from_symmetric(basis, 0.5 * (Y + Y.T)), report
        if s == s_max:
            break

        next_positive = _orthonormalize(At_positive, basis)
        next_negative = _orthonormalize(op.solve(negative), np.hstack([basis, next_positive]))
        if next_positive.shape[1] + next_negative.shape[1] == 0:
            report.wall_time = time.perf_counter() - start
            raise BreakdownError(
                f"extended Krylov space stopped growing at s={s} with residual {residual:.3e}",
                report,
            )
        positive, negative = next_positive, next_negative
        At_positive = op.apply(positive)
        new_block = np.hstack([positive, negative])
        basis = np.hstack([basis, new_block])
        At_basis = np.hstack([At_basis, At_positive, op.apply(negative)])
        F_basis = np.hstack([F_basis, np.asarray(F @ new_block)])

    report.wall_time = time.perf_counter() - start
    raise ConvergenceError(
        f"eksm did not reach tol={tol:.1e} within s_max={s_max} "
        f"(residual {report.final_residual:.3e})",
        report,
    )
