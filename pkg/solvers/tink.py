"""Truncated inexact Newton-Kleinman iteration for banded CAREs.

Each outer step solves the Newton-Kleinman Lyapunov equation
A_clᵀX̂ + X̂A_cl = −(X̃FX̃ + Q) inexactly with a matrix-valued Krylov method,
optionally damps the step with a quartic line search, and thresholds the
new iterate to the smallest bandwidth that keeps the Riccati residual from
growing and the Lyapunov residual below λ_min(Q). Residual 2-norms are
estimated with Gaussian probes.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import cholesky, eigvals, eigvalsh, norm as dense_norm
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from linalg.banded import BandedMatrix, band_truncate, lambda_min_banded
from linalg.dense import CareProblem, SolveReport, to_dense
from solvers.estimators import DEFAULT_PROBES, NormEstimator
from solvers.lyapunov import DEFAULT_MAX_ITERS, DEFAULT_MIN_ITERS, InnerSolve, cg_lyap, gmres_lyap
from utils.checks import size_cap
from utils.errors import (
    ConvergenceError,
    NotPositiveDefiniteError,
    RiccatiError,
    StabilizationError,
    ValidationError,
)

logger = logging.getLogger(__name__)

LINESEARCH_MODES = ("none", "first", "all")
STEP_FORMS = ("correction", "direct")
INNER_SOLVERS = ("gmres", "cg", "auto")
DENSE_EIG_MAX_N = 500
ARNOLDI_STEPS = 30
LAMBDA_FLOOR = 1e-4
ITER_BOUND_MAX_N = 200
PSD_RTOL = 1e-8


@dataclass(frozen=True)
class TinkOptions:
    """Parameters of ``tink``.

    ``linesearch`` is ``none``, ``first`` (first outer step only) or ``all``.
    ``forcing`` caps the inner tolerance relative to the current residual;
    with ``adaptive_forcing`` off the inner solve stops at λ_min(Q) alone.
    ``step_form`` ``direct`` solves for the next iterate from a zero guess,
    ``correction`` solves for the update X̂ − X̃_k.
    """

    tol: float = 1e-12
    k_max: int = 50
    linesearch: str = "first"
    truncation: bool = True
    alpha: float = 1e-4
    zeta: float = 0.0
    s0: int = 8
    s_step: int = 5
    min_inner: int = DEFAULT_MIN_ITERS
    max_inner: int = DEFAULT_MAX_ITERS
    probes: int = DEFAULT_PROBES
    seed: int = 0
    step_form: str = "direct"
    inner: str = "auto"
    forcing: float = 0.1
    adaptive_forcing: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if not 0.0 <= self.zeta < 1.0:
            raise ValidationError("zeta must lie in [0, 1)")
        if self.s0 < 0 or self.s_step < 1:
            raise ValidationError("s0 must be nonnegative and s_step positive")
        if self.tol <= 0 or self.k_max < 1:
            raise ValidationError("tol must be positive and k_max at least 1")
        if self.linesearch not in LINESEARCH_MODES:
            raise ValidationError(f"linesearch must be one of {LINESEARCH_MODES}")
        if self.step_form not in STEP_FORMS:
            raise ValidationError(f"step_form must be one of {STEP_FORMS}")
        if self.inner not in INNER_SOLVERS:
            raise ValidationError(f"inner must be one of {INNER_SOLVERS}")


@dataclass
class TinkState:
    X: BandedMatrix
    A_cl: BandedMatrix
    riccati_est: float
    lyapunov_est: float = float("nan")
    lam: float = 1.0
    s: int = -1


@dataclass(frozen=True)
class TruncationContext:
    A: BandedMatrix
    F: BandedMatrix
    Q: BandedMatrix
    X_prev: BandedMatrix
    A_cl: BandedMatrix
    lambda_min_q: float
    riccati_prev: float
    zeta: float = 0.0


# residual actions on probe blocks

def riccati_action(A: BandedMatrix, F: BandedMatrix, Q: BandedMatrix,
                   X: BandedMatrix) -> Callable[[np.ndarray], np.ndarray]:
    """W ↦ (AᵀX + XA − XFX + Q)·W using only banded products."""
    At = A.T

    def apply(W: np.ndarray) -> np.ndarray:
        XW = X @ W
        return At @ XW + X @ (A @ W) - X @ (F @ XW) + Q @ W
    return apply


def lyapunov_action(A_cl: BandedMatrix, X_prev: BandedMatrix, F: BandedMatrix,
                    Q: BandedMatrix, X: BandedMatrix) -> Callable[[np.ndarray], np.ndarray]:
    """W ↦ (A_clᵀX + XA_cl + X_prev·F·X_prev + Q)·W."""
    At = A_cl.T

    def apply(W: np.ndarray) -> np.ndarray:
        return (At @ (X @ W) + X @ (A_cl @ W)
                + X_prev @ (F @ (X_prev @ W)) + Q @ W)
    return apply


def banded_riccati_residual(A: BandedMatrix, F: BandedMatrix, Q: BandedMatrix,
                            X: BandedMatrix) -> BandedMatrix:
    left = A.T @ X
    return (left + left.T - X @ (F @ X) + Q).symmetrized()


# line search

def _inner(a, b) -> float:
    if isinstance(a, BandedMatrix):
        return a.inner(b)
    return float(np.sum(np.asarray(a) * np.asarray(b)))


def line_search(R_k, R_hat, V, alpha: float = 1e-4) -> Tuple[float, bool]:
    """Step length minimizing ‖(1−λ)R_k + λR̂ − λ²V‖_F on (0, 1].

    The objective is an exact quartic whose coefficients come from the
    inner products of R_k, R̂ and V. Returns the minimizer clamped to
    [1e-4, 1] and whether ‖𝓡‖_F ≤ (1 − λα)‖R_k‖_F holds there.
    """
    rr = _inner(R_k, R_k)
    if rr == 0.0:
        raise ValidationError("line search needs a nonzero residual")
    rh, hh = _inner(R_k, R_hat), _inner(R_hat, R_hat)
    rv, hv, vv = _inner(R_k, V), _inner(R_hat, V), _inner(V, V)
    # ‖P + λD − λ²V‖² with P = R_k, D = R̂ − R_k
    pp, pd, dd = rr, rh - rr, hh - 2 * rh + rr
    pv, dv = rv, hv - rv
    coefficients = (vv, -2 * dv, dd - 2 * pv, 2 * pd, pp)

    def f(lam: float) -> float:
        return max(float(np.polyval(coefficients, lam)), 0.0)

    result = minimize_scalar(f, bounds=(0.0, 1.0), method="bounded",
                             options={"xatol": 1e-12})
    lam = float(result.x)
    if f(1.0) <= f(lam):
        lam = 1.0
    lam = min(max(lam, LAMBDA_FLOOR), 1.0)
    accepted = math.sqrt(f(lam)) <= (1.0 - lam * alpha) * math.sqrt(rr)
    return lam, accepted


# truncation

def greedy_truncate(X_cand: BandedMatrix, ctx: TruncationContext, opts: TinkOptions,
                    estimator: NormEstimator) -> Tuple[BandedMatrix, int, float, float]:
    """Smallest s in {s0, s0 + s_step, ...} whose 𝒯_s(X_cand) passes both tests.

    The tests are est‖𝓡(𝒯_s X)‖₂ ≤ (1 − ζ)·est‖𝓡(X̃_k)‖₂ and
    est‖A_clᵀ𝒯_sX + 𝒯_sX·A_cl + X̃_kFX̃_k + Q‖₂ ≤ λ_min(Q).

    Returns:
        (truncated iterate, s, Riccati estimate, Lyapunov estimate); when no
        s passes, the untruncated candidate with s = n − 1
    """
    n = X_cand.n
    width = X_cand.measured_bandwidth()
    s = opts.s0
    while True:
        candidate = band_truncate(X_cand, s) if s < width else X_cand
        riccati = estimator(riccati_action(ctx.A, ctx.F, ctx.Q, candidate), n)
        lyapunov = estimator(lyapunov_action(ctx.A_cl, ctx.X_prev, ctx.F, ctx.Q, candidate), n)
        if riccati <= (1.0 - ctx.zeta) * ctx.riccati_prev and lyapunov <= ctx.lambda_min_q:
            return candidate, s, riccati, lyapunov
        if s >= width:
            return X_cand, n - 1, riccati, lyapunov
        s += opts.s_step


# stability and initial guess

def rightmost_eigenvalue(M: BandedMatrix) -> float:
    """Real part of the rightmost eigenvalue (dense below 500, Arnoldi above)."""
    if M.n < DENSE_EIG_MAX_N:
        return float(eigvals(M.to_dense(), check_finite=False).real.max())
    try:
        values = eigs(M.to_sparse(), k=1, which="LR", ncv=ARNOLDI_STEPS,
                      return_eigenvectors=False, tol=1e-8)
    except ArpackNoConvergence as exc:
        values = exc.eigenvalues
        if len(values) == 0:
            diag = M.diagonal(0)
            radii = np.asarray(abs(M.to_sparse()).sum(axis=1)).ravel() - np.abs(diag)
            return float((diag + radii).max())
    return float(np.real(values).max())


def is_stable(M: BandedMatrix) -> bool:
    return rightmost_eigenvalue(M) < 0.0


def stabilizing_init(A: BandedMatrix, F: BandedMatrix, Q: BandedMatrix,
                     probes: int = DEFAULT_PROBES, seed: int = 0) -> BandedMatrix:
    """Initial guess 0 when A is stable, otherwise c·I with A − cF stable.

    c minimizes the estimated Riccati residual of c·I over the stabilizing
    range found by doubling and bisection.
    """
    n = A.n
    if is_stable(A):
        return BandedMatrix.zeros(n)

    def stable(c: float) -> bool:
        return is_stable(A - c * F)

    scale = np.abs(A.data).sum(axis=0).max() / max(np.abs(F.data).sum(axis=0).max(), np.finfo(float).tiny)
    c_hi = max(scale, np.finfo(float).eps)
    for _ in range(60):
        if stable(c_hi):
            break
        c_hi *= 2.0
    else:
        raise StabilizationError(
            "no stabilizing multiple of the identity found; supply an initial guess X0"
        )
    c_lo = 0.0
    for _ in range(40):
        mid = 0.5 * (c_lo + c_hi)
        if stable(mid):
            c_hi = mid
        else:
            c_lo = mid
    boundary = c_hi

    omega = NormEstimator(seed, probes).rng.standard_normal((n, probes))
    A_sym = (A + A.T) @ omega
    F_omega = F @ omega
    Q_omega = Q @ omega

    def objective(c: float) -> float:
        if not stable(c):
            return np.inf
        return float(np.linalg.norm(c * A_sym - c * c * F_omega + Q_omega, axis=0).max())

    result = minimize_scalar(objective, bounds=(boundary, 4.0 * boundary), method="bounded")
    c = float(result.x) if np.isfinite(result.fun) else boundary * (1.0 + 1e-6)
    if not stable(c):
        raise StabilizationError(f"c={c:.3e} does not stabilize A - cF; supply an initial guess X0")
    logger.info(f"stabilizing_init: using X0 = {c:.6g} I")
    return BandedMatrix.identity(n, c)


def _is_symmetric(M: BandedMatrix) -> bool:
    if M.symmetric:
        return True
    return (M - M.T).frobenius_norm() <= 1e-14 * max(M.frobenius_norm(), 1.0)


def _is_scaled_identity(M: BandedMatrix) -> bool:
    diag = M.diagonal(0)
    return M.measured_bandwidth() == 0 and np.all(diag == diag[0])


@size_cap("X", ITER_BOUND_MAX_N)
def gmres_iter_bound(p: CareProblem, X) -> int:
    """GMRES iteration count sufficient for ‖R̂‖_F ≤ λ_min(Q) at iterate X.

    Uses F = LLᵀ and the transformed operator I ⊗ B + C ⊗ I with
    B = LᵀA_clᵀL⁻ᵀ and C = L·A_cl·L⁻¹. The Hermitian part is handled
    exactly through the Kronecker sum; ‖·‖₂ is bounded by ‖B‖₂ + ‖C‖₂.
    """
    dense = p.densified()
    A, F, Q = dense.A, dense.F, dense.Q
    X = to_dense(X)
    L = cholesky(F, lower=True)
    A_cl = A - F @ X
    B = L.T @ np.linalg.solve(L, A_cl).T
    C = L @ np.linalg.solve(L.T, A_cl.T).T
    hermitian_max = eigvalsh(0.5 * (B + B.T))[-1] + eigvalsh(0.5 * (C + C.T))[-1]
    if hermitian_max >= 0:
        raise ValidationError("the transformed Lyapunov operator is not dissipative")
    operator_norm = dense_norm(B, 2) + dense_norm(C, 2)
    ratio = min(hermitian_max ** 2 / operator_norm ** 2, 1.0 - 1e-16)
    w = eigvalsh(F)
    kappa = w[-1] / w[0]
    rhs = np.linalg.norm(X @ F @ X + Q)
    target = (1.0 + math.sqrt(2.0)) * kappa * rhs / eigvalsh(Q)[0]
    if target <= 1.0:
        return 0
    return int(math.ceil(2.0 * math.log(target) / -math.log(1.0 - ratio)))


# main iteration

def bandwidth_bound(iterations: int, beta_cl: int, beta_f: int, beta_q: int, s: int,
                    step_form: str = "direct", guess: Optional[BandedMatrix] = None,
                    rhs: Optional[BandedMatrix] = None) -> int:
    """Largest bandwidth the Krylov iterate X̂ can reach after ``iterations`` steps.

    Direct form: (it − 1)·β_cl + β_f + β_q + 2s with s = bw(X̃_k), since the
    right-hand side X̃_kFX̃_k + Q has bandwidth at most 2s + β_f + β_q and each
    step multiplies by A_cl. Correction form: max(bw(X̃_k), bw(R_k) + (it − 1)·β_cl).
    Zero iterations leave the initial guess.
    """
    if step_form == "direct":
        if iterations == 0:
            return 0
        return (iterations - 1) * beta_cl + beta_f + beta_q + 2 * s
    if iterations == 0:
        return guess.measured_bandwidth()
    return max(guess.measured_bandwidth(),
               rhs.measured_bandwidth() + (iterations - 1) * beta_cl)


def _inner_solve(use_cg: bool, A_cl, rhs, stop_norm, opts, estimator) -> Tuple[InnerSolve, str]:
    probe = estimator.matrix
    if use_cg:
        try:
            return cg_lyap(A_cl, rhs, stop_norm, opts.min_inner, opts.max_inner, probe), "cg"
        except NotPositiveDefiniteError as exc:
            logger.info(f"tink: {exc}; falling back to GMRES")
    return gmres_lyap(A_cl, rhs, stop_norm, opts.min_inner, opts.max_inner, probe), "gmres"


def tink(A: BandedMatrix, F: BandedMatrix, Q: BandedMatrix, opts: Optional[TinkOptions] = None,
         X0: Optional[BandedMatrix] = None) -> Tuple[BandedMatrix, SolveReport]:
    """Solve AᵀX + XA − XFX + Q = 0 for banded coefficients.

    Args:
        A, F, Q: Banded coefficients; F and Q symmetric PSD with λ_min(Q) > 0
        opts: Iteration parameters
        X0: Optional symmetric warm start; ignored if A − F·X0 is unstable

    Returns:
        Symmetric banded solution and a report whose ``notes['steps']``
        lists residual estimates, bandwidths, λ_k and s_k per outer step
    """
    opts = opts or TinkOptions()
    start = time.perf_counter()
    problem = CareProblem.from_banded(A, F, Q, check_psd=False)
    n = problem.n
    lambda_min_q = lambda_min_banded(Q)
    if lambda_min_q <= 0:
        raise ValidationError(
            f"tink needs a positive definite Q (lambda_min = {lambda_min_q:.3e})"
        )
    estimator = NormEstimator(opts.seed, opts.probes)
    report = SolveReport("tink")
    steps: List[Dict] = []
    report.notes["steps"] = steps
    report.notes["lambda_min_q"] = lambda_min_q

    if X0 is not None and is_stable(A - F @ X0):
        X = X0.symmetrized()
    else:
        if X0 is not None:
            logger.info("tink: warm start does not stabilize the closed loop, re-initializing")
        X = stabilizing_init(A, F, Q, opts.probes, opts.seed)

    use_cg = opts.inner == "cg" or (
        opts.inner == "auto" and _is_symmetric(A) and _is_scaled_identity(F)
    )
    beta_a = A.measured_bandwidth()
    beta_f, beta_q = F.measured_bandwidth(), Q.measured_bandwidth()
    current = estimator(riccati_action(A, F, Q, X), n)
    initial = max(current, np.finfo(float).tiny)
    report.record(current, X.measured_bandwidth())
    state = TinkState(X, A - F @ X, current)

    for k in range(opts.k_max):
        if state.riccati_est < opts.tol:
            report.converged = True
            break
        X = state.X
        A_cl = A - F @ X
        R_k = banded_riccati_residual(A, F, Q, X)
        if opts.adaptive_forcing:
            eta = min(opts.forcing, math.sqrt(state.riccati_est / initial))
            stop_norm = max(min(lambda_min_q, eta * state.riccati_est), 0.5 * opts.tol)
        else:
            stop_norm = lambda_min_q

        if opts.step_form == "correction":
            guess, rhs = X, -R_k
        else:
            guess, rhs = BandedMatrix.zeros(n), -(X @ (F @ X) + Q).symmetrized()
        try:
            inner, solver = _inner_solve(use_cg, A_cl, rhs, stop_norm, opts, estimator)
        except RiccatiError as exc:
            raise ConvergenceError(f"inner solve failed at outer step {k}: {exc}", report) from exc
        X_hat = (guess + inner.X).symmetrized() if opts.step_form == "correction" else inner.X
        R_hat = inner.residual

        s_prev = X.measured_bandwidth()
        beta_cl = A_cl.measured_bandwidth()
        bound = bandwidth_bound(inner.iterations, beta_cl, beta_f, beta_q, s_prev, opts.step_form,
                                guess, rhs)
        nominal = bandwidth_bound(inner.iterations, beta_a, beta_f, beta_q, s_prev, "direct")
        width_hat = X_hat.measured_bandwidth()
        if width_hat > bound:
            raise RiccatiError(
                f"bandwidth law violated at step {k}: {width_hat} > {bound}"
            )

        do_linesearch = opts.linesearch == "all" or (opts.linesearch == "first" and k == 0)
        lam, accepted = 1.0, None
        S = X_hat - X
        if do_linesearch:
            V = (S @ (F @ S)).symmetrized()
            lam, accepted = line_search(R_k, R_hat, V, opts.alpha)
        X_cand = (X + lam * S).symmetrized()

        if opts.truncation:
            ctx = TruncationContext(A, F, Q, X, A_cl, lambda_min_q, state.riccati_est, opts.zeta)
            X_next, s_k, riccati_next, lyapunov_next = greedy_truncate(X_cand, ctx, opts, estimator)
        else:
            X_next, s_k = X_cand, n - 1
            riccati_next = estimator(riccati_action(A, F, Q, X_next), n)
            lyapunov_next = estimator(lyapunov_action(A_cl, X, F, Q, X_next), n)

        lambda_min_x = None
        if n <= DENSE_EIG_MAX_N:
            spectrum = eigvalsh(X_next.to_dense(), check_finite=False)
            lambda_min_x = float(spectrum[0])
            if lambda_min_x < -PSD_RTOL * float(np.abs(spectrum).max()):
                raise ConvergenceError(
                    f"iterate at outer step {k} is indefinite (lambda_min = {lambda_min_x:.3e})",
                    report,
                )

        width = X_next.measured_bandwidth()
        steps.append({
            "k": k,
            "inner_solver": solver,
            "inner_iterations": inner.iterations,
            "inner_stagnated": inner.stagnated,
            "stop_norm": stop_norm,
            "beta_a": beta_a,
            "beta_cl": beta_cl,
            "bandwidth_hat": width_hat,
            "bandwidth_bound": bound,
            "bandwidth_bound_nominal": nominal,
            "lambda": lam,
            "lambda_min_x": lambda_min_x,
            "linesearch_accepted": accepted,
            "s": s_k,
            "bandwidth": width,
            "riccati_est": riccati_next,
            "lyapunov_est": lyapunov_next,
        })
        report.record(riccati_next, width)
        report.iterations = k + 1
        logger.debug(f"tink: k={k} it={inner.iterations} lambda={lam:.4f} s={s_k} "
                     f"bw={width} est={riccati_next:.3e}")
        state = TinkState(X_next, A - F @ X_next, riccati_next, lyapunov_next, lam, s_k)
    else:
        report.converged = state.riccati_est < opts.tol

    X = state.X
    report.notes["residual_fro"] = banded_riccati_residual(A, F, Q, X).frobenius_norm()
    report.notes["bandwidth"] = X.measured_bandwidth()
    report.wall_time = time.perf_counter() - start
    if not report.converged:
        raise ConvergenceError(
            f"tink did not reach tol={opts.tol:.1e} in k_max={opts.k_max} steps "
            f"(estimate {state.riccati_est:.3e})",
            report,
        )
    logger.info(f"tink: n={n} steps={report.iterations} bandwidth={X.measured_bandwidth()} "
                f"time={report.wall_time:.2f}s")
    return X, report
