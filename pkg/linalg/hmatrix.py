"""Recursive 2×2 hierarchical low-rank matrices (HODLR).

Every internal node splits its index range into contiguous halves of sizes
⌈m/2⌉ and ⌊m/2⌋, keeps both diagonal blocks as children and stores the two
offdiagonal blocks as LowRankFactor instances. Leaves (size <= n_min) are dense.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve, svd

from linalg.banded import BandedMatrix
from linalg.lowrank import LowRankFactor, lowrank_recompress
from utils.errors import SingularMatrixError, ValidationError

DEFAULT_N_MIN = 250
DEFAULT_TOL = 1e-10


def split_sizes(m: int) -> Tuple[int, int]:
    return (m + 1) // 2, m // 2


def tree_depth(n: int, n_min: int) -> int:
    depth = 0
    while n > n_min:
        n = (n + 1) // 2
        depth += 1
    return depth


def _truncate(L: LowRankFactor, atol: float) -> LowRankFactor:
    """Recompress with an absolute threshold."""
    return lowrank_recompress(L, 1.0, scale=max(atol, np.finfo(float).tiny))


def _lowrank_product(L1: LowRankFactor, L2: LowRankFactor) -> LowRankFactor:
    """Exact factor of L1 @ L2 with rank min(r1, r2)."""
    if L1.rank == 0 or L2.rank == 0:
        return LowRankFactor.zeros(L1.shape[0], L2.shape[1])
    core = L1.D @ (L1.V.T @ L2.U) @ L2.D
    if L1.rank <= L2.rank:
        return LowRankFactor(L1.U, np.eye(L1.rank), L2.V @ core.T)
    return LowRankFactor(L1.U @ core, np.eye(L2.rank), L2.V)


def _compress_block(B: np.ndarray, atol: float) -> LowRankFactor:
    m, n = B.shape
    if B.size == 0 or not np.any(B):
        return LowRankFactor.zeros(m, n)
    u, s, vt = svd(B, full_matrices=False, check_finite=False)
    k = int(np.count_nonzero(s > atol))
    return LowRankFactor(u[:, :k], np.diag(s[:k]), vt[:k].T)


def _power_norm(matvec, rmatvec, n: int, iters: int = 30) -> float:
    """2-norm estimate from power iteration on MᵀM (never above the true norm)."""
    if n == 0:
        return 0.0
    x = np.random.default_rng(0).standard_normal(n)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iters):
        z = rmatvec(matvec(x))
        norm_z = np.linalg.norm(z)
        if norm_z == 0.0:
            return 0.0
        previous, estimate = estimate, np.sqrt(norm_z)
        x = z / norm_z
        if abs(estimate - previous) <= 1e-6 * estimate:
            break
    return float(estimate)


@dataclass(frozen=True, eq=False)
class HMatrix:
    """HODLR matrix node.

    Args:
        n: Size of the (square) block
        dense: Leaf storage, None for internal nodes
        children: The two diagonal blocks of an internal node
        upper: Factor of the (1, 2) block
        lower: Factor of the (2, 1) block
        n_min: Leaf size threshold used to build the tree
    """

    n: int
    dense: Optional[np.ndarray] = None
    children: Optional[Tuple["HMatrix", "HMatrix"]] = None
    upper: Optional[LowRankFactor] = None
    lower: Optional[LowRankFactor] = None
    n_min: int = DEFAULT_N_MIN

    __array_ufunc__ = None

    def __post_init__(self):
        if self.dense is not None:
            dense = np.array(self.dense, dtype=float)
            if dense.shape != (self.n, self.n):
                raise ValidationError(f"leaf of size {self.n} got block {dense.shape}")
            dense.flags.writeable = False
            object.__setattr__(self, "dense", dense)
            return
        if self.children is None or self.upper is None or self.lower is None:
            raise ValidationError("internal node needs children and offdiagonal factors")
        m1, m2 = split_sizes(self.n)
        if (self.children[0].n, self.children[1].n) != (m1, m2):
            raise ValidationError("children do not follow the ceil/floor splitting")
        if self.upper.shape != (m1, m2) or self.lower.shape != (m2, m1):
            raise ValidationError("offdiagonal factors have the wrong shape")

    # construction

    @classmethod
    def leaf(cls, M: np.ndarray, n_min: int = DEFAULT_N_MIN) -> "HMatrix":
        M = np.asarray(M, dtype=float)
        return cls(M.shape[0], dense=M, n_min=n_min)

    @classmethod
    def node(cls, H11: "HMatrix", H22: "HMatrix", upper: LowRankFactor,
             lower: LowRankFactor) -> "HMatrix":
        return cls(H11.n + H22.n, children=(H11, H22), upper=upper, lower=lower,
                   n_min=H11.n_min)

    @classmethod
    def block_diag(cls, H11: "HMatrix", H22: "HMatrix") -> "HMatrix":
        return cls.node(H11, H22, LowRankFactor.zeros(H11.n, H22.n),
                        LowRankFactor.zeros(H22.n, H11.n))

    @classmethod
    def from_dense(cls, M: np.ndarray, tol: float = DEFAULT_TOL,
                   n_min: int = DEFAULT_N_MIN) -> "HMatrix":
        if tol <= 0:
            raise ValidationError("tol must be positive")
        if n_min < 1:
            raise ValidationError("n_min must be at least 1")
        M = np.asarray(M, dtype=float)
        n = M.shape[0]
        scale = _power_norm(lambda x: M @ x, lambda y: M.T @ y, n)
        atol = tol * scale / max(tree_depth(n, n_min), 1)
        return cls._build_dense(M, atol, n_min)

    @classmethod
    def _build_dense(cls, M: np.ndarray, atol: float, n_min: int) -> "HMatrix":
        n = M.shape[0]
        if n <= n_min:
            return cls.leaf(M, n_min)
        m1, _ = split_sizes(n)
        return cls.node(
            cls._build_dense(M[:m1, :m1], atol, n_min),
            cls._build_dense(M[m1:, m1:], atol, n_min),
            _compress_block(M[:m1, m1:], atol),
            _compress_block(M[m1:, :m1], atol),
        )

    @classmethod
    def from_banded(cls, B: BandedMatrix, n_min: int = DEFAULT_N_MIN) -> "HMatrix":
        """Exact conversion; each offdiagonal factor has rank <= the bandwidth."""
        if n_min < 1:
            raise ValidationError("n_min must be at least 1")
        return cls._build_banded(B.to_sparse(), 0, B.n, B.lower, B.upper, n_min)

    @classmethod
    def _build_banded(cls, S, start: int, stop: int, lower: int, upper: int,
                      n_min: int) -> "HMatrix":
        n = stop - start
        if n <= n_min:
            return cls.leaf(S[start:stop, start:stop].toarray(), n_min)
        m1, m2 = split_sizes(n)
        mid = start + m1
        # (1, 2) block: nonzeros sit in its first min(upper, m2) columns
        k_up = min(upper, m2)
        V_up = np.zeros((m2, k_up))
        V_up[np.arange(k_up), np.arange(k_up)] = 1.0
        U_up = S[start:mid, mid:mid + k_up].toarray()
        # (2, 1) block: nonzeros sit in its last min(lower, m1) columns
        k_lo = min(lower, m1)
        V_lo = np.zeros((m1, k_lo))
        V_lo[np.arange(m1 - k_lo, m1), np.arange(k_lo)] = 1.0
        U_lo = S[mid:stop, mid - k_lo:mid].toarray()
        return cls.node(
            cls._build_banded(S, start, mid, lower, upper, n_min),
            cls._build_banded(S, mid, stop, lower, upper, n_min),
            LowRankFactor(U_up, np.eye(k_up), V_up),
            LowRankFactor(U_lo, np.eye(k_lo), V_lo),
        )

    @classmethod
    def identity(cls, n: int, n_min: int = DEFAULT_N_MIN, scale: float = 1.0) -> "HMatrix":
        return cls.from_banded(BandedMatrix.identity(n, scale), n_min)

    # views

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def is_leaf(self) -> bool:
        return self.dense is not None

    @property
    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(child.depth for child in self.children)

    @property
    def rank(self) -> int:
        """Largest offdiagonal rank anywhere in the tree."""
        if self.is_leaf:
            return 0
        return max(self.upper.rank, self.lower.rank,
                   self.children[0].rank, self.children[1].rank)

    def storage(self) -> int:
        """Number of stored floating point values."""
        if self.is_leaf:
            return self.dense.size
        factors = sum(L.U.size + L.D.size + L.V.size for L in (self.upper, self.lower))
        return factors + self.children[0].storage() + self.children[1].storage()

    def to_dense(self) -> np.ndarray:
        if self.is_leaf:
            return np.array(self.dense)
        return np.block([
            [self.children[0].to_dense(), self.upper.to_dense()],
            [self.lower.to_dense(), self.children[1].to_dense()],
        ])

    def same_tree(self, other: "HMatrix") -> bool:
        if self.n != other.n or self.is_leaf != other.is_leaf:
            return False
        if self.is_leaf:
            return True
        return all(a.same_tree(b) for a, b in zip(self.children, other.children))

    # products

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_leaf:
            return self.dense @ x
        m1 = self.children[0].n
        x1, x2 = x[:m1], x[m1:]
        y1 = self.children[0] @ x1 + self.upper @ x2
        y2 = self.lower @ x1 + self.children[1] @ x2
        return np.concatenate([y1, y2], axis=0)

    @functools.cached_property
    def T(self) -> "HMatrix":
        if self.is_leaf:
            return HMatrix.leaf(self.dense.T, self.n_min)
        return HMatrix.node(self.children[0].T, self.children[1].T,
                            self.lower.T, self.upper.T)

    def scaled(self, alpha: float) -> "HMatrix":
        if self.is_leaf:
            return HMatrix.leaf(alpha * self.dense, self.n_min)
        return HMatrix.node(self.children[0].scaled(alpha), self.children[1].scaled(alpha),
                            self.upper.scaled(alpha), self.lower.scaled(alpha))

    def __neg__(self) -> "HMatrix":
        return self.scaled(-1.0)

    def symmetrized(self) -> "HMatrix":
        """Mirror the upper factors onto the lower ones and symmetrize the leaves."""
        if self.is_leaf:
            return HMatrix.leaf(0.5 * (self.dense + self.dense.T), self.n_min)
        return HMatrix.node(self.children[0].symmetrized(), self.children[1].symmetrized(),
                            self.upper, self.upper.T)

    def norm2_estimate(self) -> float:
        return _power_norm(lambda x: self @ x, lambda y: self.T @ y, self.n)

    def frobenius_norm(self) -> float:
        return float(np.sqrt(self._frobenius_squared()))

    def _frobenius_squared(self) -> float:
        if self.is_leaf:
            return float(np.sum(self.dense ** 2))
        return (self.children[0]._frobenius_squared() + self.children[1]._frobenius_squared()
                + self.upper.frobenius_norm() ** 2 + self.lower.frobenius_norm() ** 2)

    # splitting

    def split(self) -> Tuple["HMatrix", "HMatrix", LowRankFactor]:
        """Return (H11, H22, δ) with H = blockdiag(H11, H22) + δ."""
        if self.is_leaf:
            raise ValidationError("cannot split a leaf block")
        m1, m2 = split_sizes(self.n)
        up, lo = self.upper, self.lower
        r1, r2 = up.rank, lo.rank
        U = np.zeros((self.n, r1 + r2))
        U[:m1, :r1] = up.U
        U[m1:, r1:] = lo.U
        V = np.zeros((self.n, r1 + r2))
        V[m1:, :r1] = up.V
        V[:m1, r1:] = lo.V
        D = np.zeros((r1 + r2, r1 + r2))
        D[:r1, :r1] = up.D
        D[r1:, r1:] = lo.D
        return self.children[0], self.children[1], LowRankFactor(U, D, V)

    def split_symmetric(self) -> Tuple["HMatrix", "HMatrix", LowRankFactor]:
        """Like ``split`` for symmetric matrices, with a symmetric δ built from the upper block."""
        if self.is_leaf:
            raise ValidationError("cannot split a leaf block")
        m1, _ = split_sizes(self.n)
        up = self.upper
        r = up.rank
        W = np.zeros((self.n, 2 * r))
        W[:m1, :r] = up.U
        W[m1:, r:] = up.V
        core = np.zeros((2 * r, 2 * r))
        core[:r, r:] = up.D
        core[r:, :r] = up.D.T
        return self.children[0], self.children[1], LowRankFactor.from_symmetric(W, core)

    # solves

    @functools.cached_property
    def _factorization(self) -> "_Factorization":
        return _Factorization(self)

    def solve(self, B: np.ndarray) -> np.ndarray:
        return self._factorization.solve(np.asarray(B, dtype=float))


class _Factorization:
    """Recursive Sherman-Morrison-Woodbury inverse of an HMatrix.

    With H = H0 + U·D·Vᵀ (H0 block diagonal) the solve is
    H0⁻¹b − H0⁻¹U·D·K⁻¹·Vᵀ·H0⁻¹b where K = I + Vᵀ·H0⁻¹U·D.
    """

    def __init__(self, H: HMatrix):
        self.leaf = H.is_leaf
        if self.leaf:
            lu, piv = lu_factor(H.dense, check_finite=False)
            pivots = np.abs(np.diag(lu))
            reference = max(np.abs(H.dense).sum(axis=0).max(), np.finfo(float).tiny)
            if pivots.min() <= np.finfo(float).eps * reference:
                raise SingularMatrixError(
                    f"singular pivot in a leaf of size {H.n}"
                )
            self.lu = (lu, piv)
            return
        self.m1 = H.children[0].n
        self.children = (H.children[0]._factorization, H.children[1]._factorization)
        _, _, delta = H.split()
        self.rank = delta.rank
        if self.rank == 0:
            return
        self.V = delta.V
        self.D = delta.D
        self.H0inv_U = self._block_solve(delta.U)
        K = np.eye(self.rank) + self.V.T @ self.H0inv_U @ self.D
        lu, piv = lu_factor(K, check_finite=False)
        if np.abs(np.diag(lu)).min() <= np.finfo(float).eps * max(np.abs(K).max(), 1.0):
            raise SingularMatrixError(f"singular Woodbury core at size {H.n}")
        self.K = (lu, piv)

    def _block_solve(self, B: np.ndarray) -> np.ndarray:
        return np.concatenate([
            self.children[0].solve(B[: self.m1]),
            self.children[1].solve(B[self.m1:]),
        ], axis=0)

    def solve(self, B: np.ndarray) -> np.ndarray:
        if self.leaf:
            return lu_solve(self.lu, B, check_finite=False)
        y = self._block_solve(B)
        if self.rank == 0:
            return y
        correction = lu_solve(self.K, self.V.T @ y, check_finite=False)
        return y - self.H0inv_U @ (self.D @ correction)


# arithmetic with truncation

def _project(H: HMatrix, like: HMatrix, atol: float) -> HMatrix:
    """Re-express H on the tree of ``like``."""
    if H.n != like.n:
        raise ValidationError(f"size mismatch {H.n} vs {like.n}")
    if H.same_tree(like):
        return H
    return _build_like(H.to_dense(), like, atol)


def _build_like(M: np.ndarray, like: HMatrix, atol: float) -> HMatrix:
    if like.is_leaf:
        return HMatrix.leaf(M, like.n_min)
    m1 = like.children[0].n
    return HMatrix.node(
        _build_like(M[:m1, :m1], like.children[0], atol),
        _build_like(M[m1:, m1:], like.children[1], atol),
        _compress_block(M[:m1, m1:], atol),
        _compress_block(M[m1:, :m1], atol),
    )


def _add(A: HMatrix, B: HMatrix, atol: float) -> HMatrix:
    if A.is_leaf:
        return HMatrix.leaf(A.dense + B.dense, A.n_min)
    return HMatrix.node(
        _add(A.children[0], B.children[0], atol),
        _add(A.children[1], B.children[1], atol),
        _truncate(A.upper.concat(B.upper), atol),
        _truncate(A.lower.concat(B.lower), atol),
    )


def _lowrank_update(H: HMatrix, L: LowRankFactor, atol: float) -> HMatrix:
    if L.rank == 0:
        return H
    if H.is_leaf:
        return HMatrix.leaf(H.dense + L.to_dense(), H.n_min)
    n, m1 = H.n, H.children[0].n
    return HMatrix.node(
        _lowrank_update(H.children[0], L.block(0, m1, 0, m1), atol),
        _lowrank_update(H.children[1], L.block(m1, n, m1, n), atol),
        _truncate(H.upper.concat(L.block(0, m1, m1, n)), atol),
        _truncate(H.lower.concat(L.block(m1, n, 0, m1)), atol),
    )


def _matmul(A: HMatrix, B: HMatrix, atol: float) -> HMatrix:
    if A.is_leaf:
        return HMatrix.leaf(A.dense @ B.dense, A.n_min)
    A11, A22 = A.children
    B11, B22 = B.children
    A12, A21 = A.upper, A.lower
    B12, B21 = B.upper, B.lower
    C11 = _lowrank_update(_matmul(A11, B11, atol), _lowrank_product(A12, B21), atol)
    C22 = _lowrank_update(_matmul(A22, B22, atol), _lowrank_product(A21, B12), atol)
    C12 = LowRankFactor(A11 @ B12.U, B12.D, B12.V).concat(
        LowRankFactor(A12.U, A12.D, B22.T @ A12.V))
    C21 = LowRankFactor(A21.U, A21.D, B11.T @ A21.V).concat(
        LowRankFactor(A22 @ B21.U, B21.D, B21.V))
    return HMatrix.node(C11, C22, _truncate(C12, atol), _truncate(C21, atol))


def _recompress(H: HMatrix, atol: float) -> HMatrix:
    if H.is_leaf:
        return H
    return HMatrix.node(
        _recompress(H.children[0], atol),
        _recompress(H.children[1], atol),
        _truncate(H.upper, atol),
        _truncate(H.lower, atol),
    )


def hm_from_banded(B: BandedMatrix, n_min: int = DEFAULT_N_MIN) -> HMatrix:
    return HMatrix.from_banded(B, n_min)


def hm_from_dense(M: np.ndarray, tol: float = DEFAULT_TOL, n_min: int = DEFAULT_N_MIN) -> HMatrix:
    return HMatrix.from_dense(M, tol, n_min)


def hm_matvec(H: HMatrix, x: np.ndarray) -> np.ndarray:
    return H @ x


def hm_add(H1: HMatrix, H2: HMatrix, tol: float = DEFAULT_TOL) -> HMatrix:
    """H1 + H2 accurate to ``tol`` relative to the larger operand."""
    scale = max(H1.norm2_estimate(), H2.norm2_estimate())
    atol = tol * scale
    return _add(H1, _project(H2, H1, atol), atol)


def hm_matmul(H1: HMatrix, H2: HMatrix, tol: float = DEFAULT_TOL) -> HMatrix:
    """H1 @ H2 accurate to ``tol`` relative to ‖H1‖·‖H2‖."""
    atol = tol * H1.norm2_estimate() * H2.norm2_estimate()
    return _matmul(H1, _project(H2, H1, atol), atol)


def hm_lowrank_update(H: HMatrix, L: LowRankFactor, tol: float = DEFAULT_TOL) -> HMatrix:
    """H + U·D·Vᵀ."""
    if L.shape != H.shape:
        raise ValidationError(f"factor shape {L.shape} does not match {H.shape}")
    atol = tol * max(H.norm2_estimate(), L.frobenius_norm())
    return _lowrank_update(H, L, atol)


def hm_recompress(H: HMatrix, tol: float = DEFAULT_TOL) -> HMatrix:
    return _recompress(H, tol * H.norm2_estimate())


def hm_solve(H: HMatrix, B: np.ndarray) -> np.ndarray:
    return H.solve(B)


def hm_split(H: HMatrix) -> Tuple[HMatrix, HMatrix, LowRankFactor]:
    return H.split()


def hm_rebalance(H: HMatrix, like: HMatrix, tol: float = DEFAULT_TOL) -> HMatrix:
    """H on the block tree of ``like`` (H itself when the trees already agree)."""
    return _project(H, like, tol * H.norm2_estimate())
