"""Matrix-valued Krylov solvers for banded Lyapunov equations.

Both solvers work on A_clᵀX + XA_cl = RHS with X kept as a BandedMatrix,
using the Frobenius inner product. Starting from X = 0, the j-th iterate
lies in span{RHS, 𝓛(RHS), ..., 𝓛^{j-1}(RHS)}, so its bandwidth grows by at
most bw(A_cl) per iteration.
"""
import logging
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from scipy.linalg import solve_triangular

from linalg.banded import BandedMatrix
from utils.checks import same_size
from utils.errors import NotPositiveDefiniteError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_MIN_ITERS = 5
DEFAULT_MAX_ITERS = 200
STAGNATION_WINDOW = 3
STAGNATION_TOL = 1e-14

Estimator = Callable[[BandedMatrix], float]


class InnerSolve(NamedTuple):
    """Outcome of an inner Lyapunov solve.

    ``residual`` is the exact residual matrix 𝓛(X) − RHS of the returned X.
    """

    X: BandedMatrix
    iterations: int
    residual: BandedMatrix
    stagnated: bool = False


def lyap_apply(A_cl: BandedMatrix, M: BandedMatrix) -> BandedMatrix:
    """A_clᵀ·M + M·A_cl; exactly symmetric when M is flagged symmetric."""
    if A_cl.n != M.n:
        raise ValidationError(f"size mismatch {A_cl.n} vs {M.n}")
    left = A_cl.T @ M
    if M.symmetric:
        return (left + left.T).symmetrized()
    return left + M @ A_cl


def _combine(basis: List[BandedMatrix], coefficients: np.ndarray, n: int) -> BandedMatrix:
    X = BandedMatrix.zeros(n)
    for y, V in zip(coefficients, basis):
        X = X + y * V
    return X


def _symmetric_like(X: BandedMatrix, reference: BandedMatrix) -> BandedMatrix:
    return X.symmetrized() if reference.symmetric else X


def _should_stop(it: int, frobenius: float, stop_norm: float, min_iters: int,
                 form: Callable[[], BandedMatrix], estimator: Optional[Estimator]) -> bool:
    if it < min_iters:
        return False
    if frobenius <= stop_norm:
        return True
    # the Gaussian estimate tracks the Frobenius norm, so only probe when close
    if estimator is not None and frobenius <= 4.0 * stop_norm:
        return estimator(form()) <= stop_norm
    return False


@same_size("A_cl", "rhs")
def gmres_lyap(A_cl: BandedMatrix, rhs: BandedMatrix, stop_norm: float,
               min_iters: int = DEFAULT_MIN_ITERS, max_iters: int = DEFAULT_MAX_ITERS,
               estimator: Optional[Estimator] = None) -> InnerSolve:
    """Full (unrestarted) GMRES on 𝓛(X) = RHS from a zero initial guess.

    Args:
        A_cl: Closed-loop matrix
        rhs: Right-hand side
        stop_norm: Target for the 2-norm of the residual
        min_iters: Iterations run before any stopping test
        max_iters: Hard iteration limit
        estimator: Optional 2-norm estimator applied to the formed residual

    Returns:
        InnerSolve with the Krylov minimizer at exit
    """
    if stop_norm <= 0:
        raise ValidationError("stop_norm must be positive")
    n = rhs.n
    beta = rhs.frobenius_norm()
    if beta == 0.0:
        zero = BandedMatrix.zeros(n)
        return InnerSolve(zero, 0, zero)

    basis = [rhs * (1.0 / beta)]
    H = np.zeros((max_iters + 1, max_iters))
    cs = np.zeros(max_iters)
    sn = np.zeros(max_iters)
    g = np.zeros(max_iters + 1)
    g[0] = beta
    history = [beta]
    stagnated = False
    it = 0

    def solution(k: int) -> BandedMatrix:
        y = solve_triangular(H[:k, :k], g[:k], check_finite=False)
        return _symmetric_like(_combine(basis[:k], y, n), rhs)

    def residual_of(k: int) -> BandedMatrix:
        return lyap_apply(A_cl, solution(k)) - rhs

    for j in range(max_iters):
        w = lyap_apply(A_cl, basis[j])
        for i in range(j + 1):
            H[i, j] = w.inner(basis[i])
            w = w - H[i, j] * basis[i]
        h_next = w.frobenius_norm()
        H[j + 1, j] = h_next
        for i in range(j):
            upper = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = upper
        radius = np.hypot(H[j, j], H[j + 1, j])
        cs[j], sn[j] = H[j, j] / radius, H[j + 1, j] / radius
        H[j, j], H[j + 1, j] = radius, 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        it = j + 1
        frobenius = abs(g[it])
        history.append(frobenius)

        if h_next <= STAGNATION_TOL * beta:
            break
        if _should_stop(it, frobenius, stop_norm, min_iters, lambda: residual_of(it), estimator):
            break
        if len(history) > STAGNATION_WINDOW:
            old = history[-STAGNATION_WINDOW - 1]
            if old - frobenius <= STAGNATION_TOL * old:
                stagnated = True
                logger.warning(f"gmres_lyap: stagnation at iteration {it}, residual {frobenius:.3e}")
                break
        basis.append(w * (1.0 / h_next))

    X = solution(it)
    R = lyap_apply(A_cl, X) - rhs
    return InnerSolve(X, it, R, stagnated)


@same_size("A_cl", "rhs")
def cg_lyap(A_cl: BandedMatrix, rhs: BandedMatrix, stop_norm: float,
            min_iters: int = DEFAULT_MIN_ITERS, max_iters: int = DEFAULT_MAX_ITERS,
            estimator: Optional[Estimator] = None) -> InnerSolve:
    """Conjugate gradients on −𝓛(X) = −RHS.

    Valid when −𝓛 is symmetric positive definite (A_cl symmetric and
    stable). Non-positive curvature raises NotPositiveDefiniteError so the
    caller can fall back to ``gmres_lyap``.
    """
    if stop_norm <= 0:
        raise ValidationError("stop_norm must be positive")
    n = rhs.n
    X = BandedMatrix.zeros(n)
    r = -rhs
    if r.frobenius_norm() == 0.0:
        return InnerSolve(X, 0, BandedMatrix.zeros(n))
    p = r
    rr = r.inner(r)
    it = 0
    for it in range(1, max_iters + 1):
        Ap = -lyap_apply(A_cl, p)
        curvature = p.inner(Ap)
        if curvature <= 0.0:
            raise NotPositiveDefiniteError(
                f"non-positive curvature {curvature:.3e} at CG iteration {it}"
            )
        alpha = rr / curvature
        X = X + alpha * p
        r = r - alpha * Ap
        rr_next = r.inner(r)
        if rr_next == 0.0:
            break
        current = X
        if _should_stop(it, np.sqrt(rr_next), stop_norm, min_iters,
                        lambda: lyap_apply(A_cl, current) - rhs, estimator):
            break
        p = r + (rr_next / rr) * p
        rr = rr_next
    X = _symmetric_like(X, rhs)
    return InnerSolve(X, it, lyap_apply(A_cl, X) - rhs)
