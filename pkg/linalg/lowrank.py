"""Low-rank factors U·D·Vᵀ and their recompression."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh, qr, svd

from utils.errors import ValidationError


@dataclass(frozen=True, eq=False)
class LowRankFactor:
    """Matrix represented as ``U @ D @ V.T``.

    Args:
        U: Left basis, m×r
        D: Core, r×r
        V: Right basis, n×r
        symmetric: True when V is U and D is symmetric
    """

    U: np.ndarray
    D: np.ndarray
    V: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        r = U.shape[1]
        if V.shape[1] != r or D.shape != (r, r):
            raise ValidationError(
                f"inconsistent factor shapes U{U.shape} D{D.shape} V{V.shape}"
            )
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "D", D)

    @classmethod
    def zeros(cls, m: int, n: Optional[int] = None, symmetric: bool = False) -> "LowRankFactor":
        n = m if n is None else n
        return cls(np.zeros((m, 0)), np.zeros((0, 0)), np.zeros((n, 0)), symmetric)

    @classmethod
    def from_symmetric(cls, U: np.ndarray, D: np.ndarray) -> "LowRankFactor":
        return cls(U, D, U, symmetric=True)

    @property
    def rank(self) -> int:
        return self.D.shape[0]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def T(self) -> "LowRankFactor":
        if self.symmetric:
            return self
        return LowRankFactor(self.V, self.D.T, self.U)

    def to_dense(self) -> np.ndarray:
        if self.rank == 0:
            return np.zeros(self.shape)
        return self.U @ (self.D @ self.V.T)

    def __matmul__(self, x):
        if self.rank == 0:
            x = np.asarray(x)
            return np.zeros((self.shape[0],) + x.shape[1:])
        return self.U @ (self.D @ (self.V.T @ x))

    def scaled(self, alpha: float) -> "LowRankFactor":
        return LowRankFactor(self.U, alpha * self.D, self.V, self.symmetric)

    def __neg__(self) -> "LowRankFactor":
        return self.scaled(-1.0)

    def concat(self, other: "LowRankFactor") -> "LowRankFactor":
        """Exact sum as a factor of rank ``self.rank + other.rank``."""
        if self.shape != other.shape:
            raise ValidationError(f"shape mismatch {self.shape} vs {other.shape}")
        r1, r2 = self.rank, other.rank
        D = np.zeros((r1 + r2, r1 + r2))
        D[:r1, :r1] = self.D
        D[r1:, r1:] = other.D
        return LowRankFactor(
            np.hstack([self.U, other.U]),
            D,
            np.hstack([self.V, other.V]),
            self.symmetric and other.symmetric,
        )

    def rows(self, start: int, stop: int) -> "LowRankFactor":
        """Row slice of the represented matrix."""
        return LowRankFactor(self.U[start:stop], self.D, self.V)

    def block(self, r0: int, r1: int, c0: int, c1: int) -> "LowRankFactor":
        return LowRankFactor(self.U[r0:r1], self.D, self.V[c0:c1])

    def frobenius_norm(self) -> float:
        if self.rank == 0:
            return 0.0
        _, Ru = qr(self.U, mode="economic", check_finite=False)
        _, Rv = qr(self.V, mode="economic", check_finite=False)
        return float(np.linalg.norm(Ru @ self.D @ Rv.T))


def lowrank_recompress(L: LowRankFactor, tol: float, scale: Optional[float] = None) -> LowRankFactor:
    """Orthogonalize both bases and truncate the core spectrum.

    Singular values (eigenvalues in the symmetric case) below ``tol`` times
    ``scale`` are dropped; ``scale`` defaults to the largest one, so the
    represented matrix moves by at most ``tol`` relative in the 2-norm.

    Args:
        L: Factor to compress
        tol: Relative truncation threshold, must be positive
        scale: Reference norm for the threshold

    Returns:
        Factor of minimal rank at that threshold
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    m, n = L.shape
    if L.rank == 0:
        return LowRankFactor.zeros(m, n, L.symmetric)

    if L.symmetric:
        Qu, Ru = qr(L.U, mode="economic", check_finite=False)
        core = Ru @ L.D @ Ru.T
        w, W = eigh(0.5 * (core + core.T), check_finite=False)
        magnitude = np.abs(w)
        top = magnitude.max()
        threshold = tol * (top if scale is None else scale)
        keep = magnitude > threshold
        if top == 0.0 or not keep.any():
            return LowRankFactor.zeros(m, n, True)
        order = np.argsort(-magnitude[keep])
        U = Qu @ W[:, keep][:, order]
        return LowRankFactor.from_symmetric(U, np.diag(w[keep][order]))

    Qu, Ru = qr(L.U, mode="economic", check_finite=False)
    Qv, Rv = qr(L.V, mode="economic", check_finite=False)
    Y, s, Zt = svd(Ru @ L.D @ Rv.T, full_matrices=False, check_finite=False)
    if s.size == 0 or s[0] == 0.0:
        return LowRankFactor.zeros(m, n)
    threshold = tol * (s[0] if scale is None else scale)
    k = int(np.count_nonzero(s > threshold))
    if k == 0:
        return LowRankFactor.zeros(m, n)
    return LowRankFactor(Qu @ Y[:, :k], np.diag(s[:k]), Qv @ Zt[:k].T)
