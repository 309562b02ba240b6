"""Dense kernels and the dense CARE solver.

Every structured solver bottoms out here: EKSM solves its projected problem
with ``dense_care``, the divide-and-conquer recursion uses it at the leaves,
and the closed forms serve as oracles for the tests and the SDRE layer.
"""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import (
    LinAlgError,
    eigh,
    eigvals,
    eigvalsh,
    lstsq,
    lu_factor,
    lu_solve,
    solve_continuous_lyapunov,
)

from linalg.banded import BandedMatrix, lambda_min_banded
from linalg.hmatrix import HMatrix, hm_add, hm_matmul
from linalg.lowrank import LowRankFactor
from utils.checks import positive, require_finite, square
from utils.errors import (
    ConvergenceError,
    IndefiniteMatrixError,
    SizeCapError,
    ValidationError,
)

logger = logging.getLogger(__name__)

STRUCTURES = ("dense", "banded", "hierarchical")
PSD_TOL = 1e-12
SYMMETRY_TOL = 1e-10
STABILITY_CHECK_MAX_N = 500
RESIDUAL_TARGET = 1e-11


def default_dense_cap() -> int:
    return int(os.getenv("RICCATI_DENSE_CAP", "2000"))


def to_dense(M) -> np.ndarray:
    if isinstance(M, (BandedMatrix, HMatrix, LowRankFactor)):
        return M.to_dense()
    return np.asarray(M, dtype=float)


def frobenius_norm(M) -> float:
    if isinstance(M, (BandedMatrix, HMatrix, LowRankFactor)):
        return M.frobenius_norm()
    return float(np.linalg.norm(M))


def _relative_asymmetry(M: np.ndarray) -> float:
    return np.linalg.norm(M - M.T) / max(np.linalg.norm(M), 1.0)


@dataclass
class SolveReport:
    """Diagnostics collected by a solver run.

    ``ranks`` holds ranks for low-rank/hierarchical solvers and bandwidths
    for the banded one; ``notes`` carries solver specific extras.
    """

    method: str
    iterations: int = 0
    residuals: List[float] = field(default_factory=list)
    ranks: List[int] = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    notes: Dict[str, Any] = field(default_factory=dict)

    def record(self, residual: float, rank: Optional[int] = None) -> None:
        self.residuals.append(float(residual))
        if rank is not None:
            self.ranks.append(int(rank))

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def summary(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.final_residual,
            "rank": self.ranks[-1] if self.ranks else None,
            "wall_time": self.wall_time,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class CareProblem:
    """Coefficients of AᵀX + XA − XFX + Q = 0.

    Args:
        A: State matrix
        F: Quadratic term, symmetric positive semidefinite
        Q: Constant term, symmetric positive semidefinite
        structure: One of ``dense``, ``banded``, ``hierarchical``
        check_psd: Verify F and Q are PSD (off for projected problems)
    """

    A: Any
    F: Any
    Q: Any
    structure: str = "dense"
    check_psd: bool = True

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValidationError(f"unknown structure tag {self.structure!r}")
        expected = {"dense": np.ndarray, "banded": BandedMatrix, "hierarchical": HMatrix}[self.structure]
        coefficients = {}
        for name in ("A", "F", "Q"):
            value = getattr(self, name)
            if self.structure == "dense":
                value = np.atleast_2d(np.asarray(value, dtype=float))
                require_finite(value, name)
                object.__setattr__(self, name, value)
            elif not isinstance(value, expected):
                raise ValidationError(
                    f"{name} must be {expected.__name__} for structure {self.structure!r}"
                )
            shape = value.shape
            if len(shape) != 2 or shape[0] != shape[1]:
                raise ValidationError(f"{name} must be square, got shape {shape}")
            coefficients[name] = value
        sizes = {name: value.shape[0] for name, value in coefficients.items()}
        if len(set(sizes.values())) != 1:
            raise ValidationError(f"size mismatch: {sizes}")
        for name in ("F", "Q"):
            self._check_symmetric(name, coefficients[name])
            if self.check_psd:
                self._check_psd(name, coefficients[name])

    def _check_symmetric(self, name: str, M) -> None:
        if getattr(M, "symmetric", False):
            return
        if isinstance(M, BandedMatrix):
            asym = (M - M.T).frobenius_norm() / max(M.frobenius_norm(), 1.0)
        elif isinstance(M, HMatrix):
            if M.n > STABILITY_CHECK_MAX_N:
                return
            asym = _relative_asymmetry(M.to_dense())
        else:
            asym = _relative_asymmetry(M)
        if asym > SYMMETRY_TOL:
            raise ValidationError(f"{name} is not symmetric")

    def _check_psd(self, name: str, M) -> None:
        if isinstance(M, BandedMatrix):
            smallest = lambda_min_banded(M)
            scale = np.abs(M.data).sum(axis=0).max()
        elif isinstance(M, HMatrix):
            if M.n > STABILITY_CHECK_MAX_N:
                return
            w = eigvalsh(M.to_dense())
            smallest, scale = w[0], np.abs(w).max()
        else:
            w = eigvalsh(0.5 * (M + M.T))
            smallest, scale = w[0], np.abs(w).max()
        if smallest < -PSD_TOL * max(scale, np.finfo(float).tiny):
            raise IndefiniteMatrixError(
                f"{name} has eigenvalue {smallest:.3e} below the PSD tolerance"
            )

    @classmethod
    def from_banded(cls, A: BandedMatrix, F: BandedMatrix, Q: BandedMatrix,
                    check_psd: bool = True) -> "CareProblem":
        return cls(A, F, Q, "banded", check_psd)

    @classmethod
    def from_hierarchical(cls, A: HMatrix, F: HMatrix, Q: HMatrix,
                          check_psd: bool = True) -> "CareProblem":
        return cls(A, F, Q, "hierarchical", check_psd)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def densified(self) -> "CareProblem":
        if self.structure == "dense":
            return self
        return CareProblem(to_dense(self.A), to_dense(self.F), to_dense(self.Q),
                           "dense", check_psd=False)


@square("M")
def sym_eig(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if _relative_asymmetry(M) > SYMMETRY_TOL:
        raise ValidationError("sym_eig needs a symmetric matrix")
    try:
        return eigh(0.5 * (M + M.T), check_finite=False)
    except LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed: {exc}") from exc


def sqrtm_spd(M: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix.

    Eigenvalues down to -1e-12·‖M‖₂ are clamped to zero; anything more
    negative raises IndefiniteMatrixError.
    """
    w, V = sym_eig(M)
    scale = np.abs(w).max() if w.size else 0.0
    if w.size and w[0] < -PSD_TOL * scale:
        raise IndefiniteMatrixError(f"eigenvalue {w[0]:.3e} below the PSD tolerance")
    root = np.sqrt(np.clip(w, 0.0, None))
    S = (V * root) @ V.T
    return 0.5 * (S + S.T)


@positive("gamma")
def care_closed_form_sym(A: np.ndarray, Q: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    """γ(√(A² + γ⁻¹Q) + A), the stabilizing solution for symmetric stable A and F = γ⁻¹I."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if _relative_asymmetry(A) > SYMMETRY_TOL:
        raise ValidationError("A is not symmetric")
    if _relative_asymmetry(Q) > SYMMETRY_TOL:
        raise ValidationError("Q is not symmetric")
    X = gamma * (sqrtm_spd(A @ A + Q / gamma) + A)
    return 0.5 * (X + X.T)


@positive("lminF")
def sol_norm_bound(tau: float, normF: float, normQ: float, lminF: float) -> float:
    """Upper bound (τ + √(τ² + ‖F‖‖Q‖)) / λ_min(F) on the 2-norm of the stabilizing solution."""
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    return float((tau + np.sqrt(tau ** 2 + normF * normQ)) / lminF)


def _residual_dense(A, F, Q, X) -> np.ndarray:
    XFX = X @ F @ X
    return A.T @ X + X @ A - XFX + Q


def _relative(norm_r: float, norm_q: float) -> float:
    return norm_r / norm_q if norm_q > 0 else norm_r


def riccati_residual(p: CareProblem, X) -> Tuple[Any, float]:
    """Residual AᵀX + XA − XFX + Q and its Frobenius norm relative to ‖Q‖_F.

    The residual is formed in the format shared by the problem and X:
    dense arrays, banded arithmetic, or hierarchical arithmetic at a
    truncation tolerance near machine precision. Low-rank X and mixed
    formats are assembled densely. With Q = 0 the absolute norm is returned.
    """
    if X.shape != (p.n, p.n):
        raise ValidationError(f"X has shape {X.shape}, expected {(p.n, p.n)}")
    norm_q = frobenius_norm(p.Q)
    if p.structure == "banded" and isinstance(X, BandedMatrix):
        R = p.A.T @ X + X @ p.A - X @ (p.F @ X) + p.Q
        return R, _relative(R.frobenius_norm(), norm_q)
    if p.structure == "hierarchical" and isinstance(X, HMatrix):
        tol = 1e-14
        AtX = hm_matmul(p.A.T, X, tol)
        XA = hm_matmul(X, p.A, tol)
        XFX = hm_matmul(X, hm_matmul(p.F, X, tol), tol)
        R = hm_add(hm_add(AtX, XA, tol), hm_add(p.Q, -XFX, tol), tol)
        return R, _relative(R.frobenius_norm(), norm_q)
    dense = p.densified()
    R = _residual_dense(dense.A, dense.F, dense.Q, to_dense(X))
    return R, _relative(np.linalg.norm(R), norm_q)


def _sign_function(H: np.ndarray, tol: float = 1e-12, max_iter: int = 100) -> Tuple[np.ndarray, int]:
    """Newton iteration Z ← (Z/c + c·Z⁻¹)/2 with determinant scaling."""
    Z = np.array(H)
    N = Z.shape[0]
    identity = np.eye(N)
    scaling = True
    previous = np.inf
    for k in range(1, max_iter + 1):
        lu, piv = lu_factor(Z, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() <= np.finfo(float).eps * np.linalg.norm(Z, 1):
            raise ConvergenceError(
                "sign iteration hit a singular iterate; the Hamiltonian has "
                "eigenvalues on or near the imaginary axis"
            )
        Zinv = lu_solve((lu, piv), identity, check_finite=False)
        c = np.exp(np.sum(np.log(pivots)) / N) if scaling else 1.0
        Z_next = 0.5 * (Z / c + c * Zinv)
        diff = np.linalg.norm(Z_next - Z, 1)
        norm_z = np.linalg.norm(Z_next, 1)
        Z = Z_next
        if diff <= tol * norm_z:
            return Z, k
        if diff <= 1e-2 * norm_z:
            scaling = False
        # roundoff floor reached
        if not scaling and diff >= previous and diff <= 1e-8 * norm_z:
            return Z, k
        previous = diff
    raise ConvergenceError(f"sign iteration did not converge in {max_iter} steps")


def _closed_loop_stable(A_cl: np.ndarray) -> bool:
    spectrum = eigvals(A_cl, check_finite=False)
    slack = np.sqrt(np.finfo(float).eps) * max(np.linalg.norm(A_cl, 1), 1.0)
    return bool(spectrum.real.max() <= slack)


def dense_care(p: CareProblem, dense_cap: Optional[int] = None,
               max_refinements: int = 2) -> Tuple[np.ndarray, SolveReport]:
    """Stabilizing solution of a dense CARE.

    Runs the scaled sign iteration on H = [[A, −F], [−Q, −Aᵀ]], extracts X
    from the stable invariant subspace by least squares and, if the relative
    residual misses 1e-11, polishes with up to ``max_refinements``
    Newton-Kleinman steps.

    Returns:
        Symmetric solution and its SolveReport; ``notes['stable']`` is None
        when the closed loop was too large to check.
    """
    cap = default_dense_cap() if dense_cap is None else dense_cap
    if p.n > cap:
        raise SizeCapError(f"dense_care size {p.n} above the cap {cap}")
    start = time.perf_counter()
    dense = p.densified()
    A, F, Q = dense.A, dense.F, dense.Q
    n = p.n
    report = SolveReport("dense_care")

    H = np.block([[A, -F], [-Q, -A.T]])
    W, steps = _sign_function(H)
    report.iterations = steps
    lhs = np.vstack([W[:n, n:], W[n:, n:] + np.eye(n)])
    rhs = -np.vstack([W[:n, :n] + np.eye(n), W[n:, :n]])
    X, *_ = lstsq(lhs, rhs, check_finite=False)
    X = 0.5 * (X + X.T)

    norm_q = np.linalg.norm(Q)
    R = _residual_dense(A, F, Q, X)
    residual = _relative(np.linalg.norm(R), norm_q)
    report.record(residual)
    refinements = 0
    while residual > RESIDUAL_TARGET and refinements < max_refinements:
        A_cl = A - F @ X
        delta = solve_continuous_lyapunov(A_cl.T, -R)
        X = X + 0.5 * (delta + delta.T)
        R = _residual_dense(A, F, Q, X)
        residual = _relative(np.linalg.norm(R), norm_q)
        report.record(residual)
        refinements += 1

    stable = _closed_loop_stable(A - F @ X) if n <= STABILITY_CHECK_MAX_N else None
    if stable is False:
        logger.warning(f"dense_care: closed loop of size {n} is not stable")
    report.notes.update(sign_iterations=steps, refinements=refinements, stable=stable)
    report.converged = residual <= RESIDUAL_TARGET
    report.wall_time = time.perf_counter() - start
    if not report.converged:
        logger.debug(f"dense_care: residual {residual:.2e} above target after refinement")
    return X, report
