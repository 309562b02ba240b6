"""Seeded test-problem generators for the experiments and the test suite."""
import math
from typing import Tuple

import numpy as np
from scipy.linalg import qr

from linalg.banded import BandedMatrix
from linalg.hmatrix import DEFAULT_N_MIN, HMatrix, hm_from_dense
from utils.errors import ValidationError

DAC_TESTS = (1, 2, 3, 4, 5)
DECAY_CASES = ("real_spectrum", "kappa_real", "kappa_shifted")


def random_unitary_hessenberg(n: int, rng: np.random.Generator, subdiagonals: int = 1) -> np.ndarray:
    """Orthogonal factor of the QR of a Gaussian matrix with ``subdiagonals`` subdiagonals.

    R's diagonal is made nonnegative so the factor depends only on the draw,
    and entries below the band are zeroed exactly.
    """
    if n < 1 or subdiagonals < 0:
        raise ValidationError("n must be positive and subdiagonals nonnegative")
    G = np.triu(rng.standard_normal((n, n)), -subdiagonals)
    W, R = qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return np.triu(W * signs, -subdiagonals)


def unitary_similarity(diagonal: np.ndarray, W: np.ndarray) -> np.ndarray:
    """W·diag(d)·Wᵀ, symmetrized."""
    M = (W * diagonal) @ W.T
    return 0.5 * (M + M.T)


# decay study

def decay_q(n: int) -> np.ndarray:
    """Q = TTᵀ/‖TTᵀ‖₂ with T lower bidiagonal of ones."""
    T = np.eye(n) + np.eye(n, k=-1)
    M = T @ T.T
    return M / np.linalg.norm(M, 2)


def decay_instance(n: int, case: str = "real_spectrum", kappa: float = 1.0,
                   rng: np.random.Generator = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense (A, F, Q) for the offdiagonal decay study.

    ``real_spectrum``: A = diag(−logspace(−3, 0, n)), F = I.
    ``kappa_real``: A = W·D·Wᵀ with the same D and a random unitary Hessenberg W.
    ``kappa_shifted``: A = W − 1.1·I.
    The kappa cases take F = diag(logspace) on [κ^{−1/2}, κ^{1/2}].
    """
    if case not in DECAY_CASES:
        raise ValidationError(f"case must be one of {DECAY_CASES}")
    if kappa < 1:
        raise ValidationError("kappa must be >= 1")
    D = -np.logspace(-3, 0, n)
    Q = decay_q(n)
    if case == "real_spectrum":
        return np.diag(D), np.eye(n), Q
    rng = rng if rng is not None else np.random.default_rng(0)
    W = random_unitary_hessenberg(n, rng)
    A = unitary_similarity(D, W) if case == "kappa_real" else W - 1.1 * np.eye(n)
    half = 0.5 * math.log10(kappa)
    F = np.diag(np.logspace(-half, half, n))
    return A, F, Q


# divide-and-conquer benchmark

def dac_test_dense(test_id: int, n: int, rng: np.random.Generator,
                   subdiagonals: int = 2) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense (A, F, Q) of the five divide-and-conquer tests.

    F = W_F·diag(logspace(−2, 2, n))·W_Fᵀ and Q = W_Q·diag(linspace(0, 1, n))·W_Qᵀ
    in every test; test 5 uses ``subdiagonals`` for the factor of A.
    """
    if test_id not in DAC_TESTS:
        raise ValidationError(f"test_id must be one of {DAC_TESTS}")
    if test_id == 1 or test_id == 5:
        width = subdiagonals if test_id == 5 else 1
        A = unitary_similarity(-np.logspace(-3, 0, n), random_unitary_hessenberg(n, rng, width))
    elif test_id == 2:
        A = random_unitary_hessenberg(n, rng) - 2.0 * np.eye(n)
    elif test_id == 3:
        A = unitary_similarity(-np.logspace(-2 * math.log10(n), 0, n), random_unitary_hessenberg(n, rng))
    else:
        A = random_unitary_hessenberg(n, rng) - (1.0 + 1.0 / math.log(n)) * np.eye(n)
    F = unitary_similarity(np.logspace(-2, 2, n), random_unitary_hessenberg(n, rng))
    Q = unitary_similarity(np.linspace(0, 1, n), random_unitary_hessenberg(n, rng))
    return A, F, Q


def dac_test_instance(test_id: int, n: int, rng: np.random.Generator, subdiagonals: int = 2,
                      tol: float = 1e-10, n_min: int = DEFAULT_N_MIN) -> Tuple[HMatrix, HMatrix, HMatrix]:
    A, F, Q = dac_test_dense(test_id, n, rng, subdiagonals)
    return (hm_from_dense(A, tol, n_min), hm_from_dense(F, tol, n_min),
            hm_from_dense(Q, tol, n_min))


# banded benchmarks

def laplacian_1d(n: int) -> BandedMatrix:
    """tridiag(1, −2, 1)."""
    return BandedMatrix.from_diagonals(n, {-1: 1.0, 0: -2.0, 1: 1.0}, symmetric=True)


def tridiagonal(n: int, off: float, diag: float = 1.0) -> BandedMatrix:
    return BandedMatrix.from_diagonals(n, {-1: off, 0: diag, 1: off}, symmetric=True)


def line_search_instance(n: int) -> Tuple[BandedMatrix, BandedMatrix, BandedMatrix]:
    """A = tridiag(1, −2, 1), Q = tridiag(0.48, 1, 0.48), F = LLᵀ with L = I + 0.1·(superdiagonal)."""
    L = BandedMatrix.from_diagonals(n, {0: 1.0, 1: 0.1})
    F = (L @ L.T).symmetrized()
    return laplacian_1d(n), F, tridiagonal(n, 0.48)


def kappa_instance(n: int, kappa: float) -> Tuple[BandedMatrix, BandedMatrix, BandedMatrix]:
    """A = tridiag(1, −2, 1), F diagonal logspace on [κ^{−1/2}, κ^{1/2}], Q = tridiag(0.1, 1, 0.1)."""
    if kappa < 1:
        raise ValidationError("kappa must be >= 1")
    half = 0.5 * math.log10(kappa)
    F = BandedMatrix(np.atleast_2d(np.logspace(-half, half, n)), 0, 0, True)
    return laplacian_1d(n), F, tridiagonal(n, 0.1)


def random_stabilizable(n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense instance with F and Q positive definite, so (A, F) is stabilizable."""
    A = rng.standard_normal((n, n)) / math.sqrt(n)
    G = rng.standard_normal((n, n))
    F = G @ G.T / n + 0.1 * np.eye(n)
    H = rng.standard_normal((n, n))
    Q = H @ H.T / n + 0.1 * np.eye(n)
    return A, F, Q


def random_banded_problem(n: int, rng: np.random.Generator, bandwidth: int = 1,
                          shift: float = 3.0) -> Tuple[BandedMatrix, BandedMatrix, BandedMatrix]:
    """Banded A = random band − shift·I, F and Q diagonally dominant symmetric bands."""
    diagonals = {k: 0.5 * rng.standard_normal(n - abs(k)) for k in range(-bandwidth, bandwidth + 1)}
    diagonals[0] = diagonals[0] - shift
    A = BandedMatrix.from_diagonals(n, diagonals)
    F = tridiagonal(n, 0.2, 1.0)
    Q = tridiagonal(n, 0.1 + 0.1 * rng.random(), 1.0)
    return A, F, Q
