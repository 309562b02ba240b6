"""Divide-and-conquer CARE solver for hierarchical coefficients.

Each node splits A = A₀ + δA, F = F₀ + δF, Q = Q₀ + δQ into block-diagonal
parts plus low-rank corrections, solves the two diagonal CAREs recursively,
and repairs the block-diagonal solution X₀ with a low-rank δX from EKSM:

    A_clᵀδX + δXA_cl − δXFδX = −δQ − δAᵀX₀ − X₀δA + X₀δFX₀,  A_cl = A − FX₀.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from linalg.dense import CareProblem, SolveReport, dense_care, riccati_residual
from linalg.hmatrix import (
    DEFAULT_N_MIN,
    HMatrix,
    hm_add,
    hm_lowrank_update,
    hm_matmul,
    hm_rebalance,
    hm_recompress,
)
from linalg.lowrank import LowRankFactor, lowrank_recompress
from solvers.eksm import DEFAULT_S_MAX, eksm_care
from utils.errors import DacError, RiccatiError, ValidationError

logger = logging.getLogger(__name__)

PARALLEL_LEVELS = 2
# every submitting node blocks a worker while its children run
POOL_WORKERS = 2 ** (PARALLEL_LEVELS + 1) - 2


@dataclass(frozen=True)
class DacOptions:
    n_min: int = DEFAULT_N_MIN
    compression_tol: float = 1e-10
    eksm_tol: float = 1e-8
    s_max: int = DEFAULT_S_MAX
    parallel: bool = False
    compute_residual: bool = True

    def __post_init__(self):
        if self.compression_tol <= 0 or self.eksm_tol <= 0:
            raise ValidationError("tolerances must be positive")
        if self.n_min < 1 or self.s_max < 1:
            raise ValidationError("n_min and s_max must be at least 1")


def _symmetric_form(L: LowRankFactor) -> Tuple[np.ndarray, np.ndarray]:
    """(W, C) with W·C·Wᵀ equal to the symmetric matrix L represents."""
    if L.symmetric or L.rank == 0:
        return L.U, L.D
    r = L.rank
    core = np.zeros((2 * r, 2 * r))
    core[:r, r:] = 0.5 * L.D
    core[r:, :r] = 0.5 * L.D.T
    return np.hstack([L.U, L.V]), core


def assemble_correction_rhs(X0, dA: LowRankFactor, dF: LowRankFactor, dQ: LowRankFactor,
                            tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Factor U·D·Uᵀ = −δQ − δAᵀX₀ − X₀δA + X₀δFX₀.

    With δA = U_A·V_Aᵀ (core absorbed into U_A) the factor is
    U = [U_Q, V_A, X₀U_A, X₀U_F] and D = blkdiag(−D_Q, [[0, −I], [−I, 0]], D_F).

    Args:
        X0: Symmetric block-diagonal solution (HMatrix or dense)
        dA, dF, dQ: Low-rank corrections; dF and dQ represent symmetric matrices
        tol: Recompression tolerance, None keeps the exact factor

    Returns:
        (U, D) with D symmetric
    """
    n = dA.shape[0]
    if dF.shape != (n, n) or dQ.shape != (n, n):
        raise ValidationError("corrections must be conformal")
    U_Q, D_Q = _symmetric_form(dQ)
    U_F, D_F = _symmetric_form(dF)
    U_A = dA.U @ dA.D
    V_A = dA.V
    X0_UA = np.asarray(X0 @ U_A).reshape(n, -1)
    X0_UF = np.asarray(X0 @ U_F).reshape(n, -1)

    q, a, f = U_Q.shape[1], U_A.shape[1], U_F.shape[1]
    size = q + 2 * a + f
    D = np.zeros((size, size))
    D[:q, :q] = -D_Q
    D[q:q + a, q + a:q + 2 * a] = -np.eye(a)
    D[q + a:q + 2 * a, q:q + a] = -np.eye(a)
    D[q + 2 * a:, q + 2 * a:] = D_F
    U = np.hstack([U_Q, V_A, X0_UA, X0_UF])
    if tol is None or size == 0:
        return U, D
    compressed = lowrank_recompress(LowRankFactor.from_symmetric(U, D), tol)
    return compressed.U, compressed.D


class _DacRun:
    def __init__(self, opts: DacOptions):
        self.opts = opts
        self.pool = ThreadPoolExecutor(max_workers=POOL_WORKERS) if opts.parallel else None

    def solve(self, A: HMatrix, F: HMatrix, Q: HMatrix, level: int,
              offset: int) -> Tuple[HMatrix, List[Dict]]:
        if A.is_leaf:
            return self._leaf(A, F, Q, level, offset), []

        A11, A22, dA = A.split()
        F11, F22, dF = F.split_symmetric()
        Q11, Q22, dQ = Q.split_symmetric()
        m1 = A11.n
        if self.pool is not None and level < PARALLEL_LEVELS:
            first = self.pool.submit(self.solve, A11, F11, Q11, level + 1, offset)
            second = self.pool.submit(self.solve, A22, F22, Q22, level + 1, offset + m1)
            (X11, entries11), (X22, entries22) = first.result(), second.result()
        else:
            X11, entries11 = self.solve(A11, F11, Q11, level + 1, offset)
            X22, entries22 = self.solve(A22, F22, Q22, level + 1, offset + m1)

        try:
            X, entry = self._merge(A, F, X11, X22, dA, dF, dQ)
        except DacError:
            raise
        except RiccatiError as exc:
            raise DacError(str(exc), level, offset, A.n) from exc
        entry.update(level=level, offset=offset, size=A.n)
        return X, entries11 + entries22 + [entry]

    def _leaf(self, A: HMatrix, F: HMatrix, Q: HMatrix, level: int, offset: int) -> HMatrix:
        try:
            X, _ = dense_care(CareProblem(A.dense, F.dense, Q.dense, check_psd=False))
        except RiccatiError as exc:
            raise DacError(str(exc), level, offset, A.n) from exc
        return HMatrix.leaf(X, A.n_min)

    def _merge(self, A, F, X11, X22, dA, dF, dQ) -> Tuple[HMatrix, Dict]:
        tol = self.opts.compression_tol
        X0 = HMatrix.block_diag(X11, X22)
        U, D = assemble_correction_rhs(X0, dA, dF, dQ, tol)
        A_cl = hm_recompress(hm_add(A, -hm_matmul(F, X0, tol), tol), tol)
        dX, eksm_report = eksm_care(A_cl, F, U, D, self.opts.eksm_tol, self.opts.s_max)
        dX = lowrank_recompress(dX, tol)
        X = hm_recompress(hm_lowrank_update(X0, dX, tol), tol).symmetrized()
        entry = {
            "eksm_iterations": eksm_report.iterations,
            "rhs_rank": U.shape[1],
            "dx_rank": dX.rank,
            "eksm_residual": eksm_report.final_residual,
        }
        return X, entry

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def dac_care(A: HMatrix, F: HMatrix, Q: HMatrix,
             opts: Optional[DacOptions] = None) -> Tuple[HMatrix, SolveReport]:
    """Solve AᵀX + XA − XFX + Q = 0 for hierarchical A, F, Q.

    F and Q are re-expressed on the tree of A when their trees differ.
    The report lists one entry per internal node in ``notes['levels']``
    (children before parents) and, if requested, the global relative residual.
    """
    opts = opts or DacOptions()
    start = time.perf_counter()
    F = hm_rebalance(F, A, opts.compression_tol)
    Q = hm_rebalance(Q, A, opts.compression_tol)
    problem = CareProblem.from_hierarchical(A, F, Q)

    run = _DacRun(opts)
    try:
        X, entries = run.solve(problem.A, problem.F, problem.Q, 0, 0)
    finally:
        run.close()

    report = SolveReport("dac_care")
    report.iterations = len(entries)
    report.notes["levels"] = entries
    report.notes["depth"] = A.depth
    report.wall_time = time.perf_counter() - start
    if opts.compute_residual:
        _, residual = riccati_residual(problem, X)
        report.record(residual, X.rank)
        report.converged = residual <= 10 * opts.eksm_tol
    else:
        report.ranks.append(X.rank)
        report.converged = True
    logger.info(f"dac_care: n={A.n} depth={A.depth} rank={X.rank} "
                f"time={report.wall_time:.2f}s residual={report.final_residual:.2e}")
    return X, report
