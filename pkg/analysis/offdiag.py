"""Offdiagonal singular values and quasiseparable rank of dense matrices."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import svdvals

from linalg.dense import default_dense_cap, to_dense
from utils.errors import SizeCapError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecayProfile:
    """σ_ℓ^off(X) = max_j σ_ℓ(X[j:, :j]) for ℓ = 1..len(values).

    ``norm`` is ‖X‖₂, kept so the profile can be normalized the same way
    the decay bounds are.
    """

    values: np.ndarray
    n: int
    norm: float

    def normalized(self, by: str = "norm") -> np.ndarray:
        """Profile divided by ‖X‖₂ (``by="norm"``) or by σ₁^off (``by="first"``)."""
        if by == "norm":
            scale = self.norm
        elif by == "first":
            scale = float(self.values[0]) if self.values.size else 0.0
        else:
            raise ValidationError(f"unknown normalization {by!r}")
        if scale == 0.0:
            return np.zeros_like(self.values)
        return self.values / scale

    def __len__(self) -> int:
        return int(self.values.size)


def _check_dense(M, name: str = "M") -> np.ndarray:
    M = to_dense(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    cap = default_dense_cap()
    if M.shape[0] > cap:
        raise SizeCapError(f"{name} has n={M.shape[0]} above the dense cap {cap}")
    return M


def offdiag_singular_values(X, l_max: Optional[int] = None,
                            workers: int = 1) -> DecayProfile:
    """Maximum over split points of the singular values of the lower-left blocks.

    Args:
        X: Square dense matrix (or anything ``to_dense`` accepts)
        l_max: Number of singular values kept, default n // 2
        workers: Thread count for the per-split SVDs

    Returns:
        DecayProfile with ``l_max`` entries
    """
    X = _check_dense(X, "X")
    n = X.shape[0]
    l_max = n // 2 if l_max is None else int(l_max)
    if l_max < 0:
        raise ValidationError("l_max must be nonnegative")

    def block_values(j: int) -> np.ndarray:
        s = svdvals(X[j:, :j], check_finite=False)
        out = np.zeros(l_max)
        m = min(l_max, s.size)
        out[:m] = s[:m]
        return out

    values = np.zeros(l_max)
    if n > 1 and l_max:
        splits = range(1, n)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                blocks = list(pool.map(block_values, splits))
        else:
            blocks = [block_values(j) for j in splits]
        values = np.max(np.vstack(blocks), axis=0)
    norm = float(np.linalg.norm(X, 2)) if n else 0.0
    return DecayProfile(values, n, norm)


def numerical_rank(B: np.ndarray, tol: float, reference: Optional[float] = None) -> int:
    """Number of singular values of B above tol·reference (reference defaults to σ₁(B))."""
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        return 0
    s = svdvals(B, check_finite=False)
    reference = s[0] if reference is None else reference
    if reference == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * reference))


def qsrank(M, tol: float = 1e-10) -> int:
    """Quasiseparable order: max numerical rank over all maximal offdiagonal blocks.

    Ranks are counted relative to ‖M‖₂, so blocks that are negligible with
    respect to the whole matrix count as rank zero.
    """
    M = _check_dense(M)
    n = M.shape[0]
    if n < 2:
        return 0
    norm = float(np.linalg.norm(M, 2))
    best = 0
    for j in range(1, n):
        best = max(best,
                   numerical_rank(M[j:, :j], tol, norm),
                   numerical_rank(M[:j, j:], tol, norm))
    return best
