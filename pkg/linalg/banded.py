"""Banded matrices in LAPACK diagonal-ordered storage.

Row ``upper + i - j`` of ``data`` holds entry ``(i, j)``; this is the layout
``scipy.linalg.solve_banded`` and ``scipy.sparse.dia_matrix`` both read, so
arithmetic is delegated to scipy.sparse and solves to LAPACK.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cholesky_banded, solve_banded

from utils.errors import SingularMatrixError, ValidationError


def _clamp_band(width: int, n: int) -> int:
    return min(width, max(n - 1, 0))


@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """Square banded matrix.

    Args:
        data: Diagonal-ordered storage of shape (lower + upper + 1, n)
        lower: Number of stored subdiagonals
        upper: Number of stored superdiagonals
        symmetric: Marks M == M.T (requires lower == upper)
    """

    data: np.ndarray
    lower: int
    upper: int
    symmetric: bool = False

    # numpy scalars defer to __rmul__ instead of building object arrays
    __array_ufunc__ = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float, ndmin=2)
        if self.lower < 0 or self.upper < 0:
            raise ValidationError("bandwidths must be nonnegative")
        if data.shape[0] != self.lower + self.upper + 1:
            raise ValidationError(
                f"storage has {data.shape[0]} rows, expected {self.lower + self.upper + 1}"
            )
        if self.symmetric and self.lower != self.upper:
            raise ValidationError("symmetric storage needs lower == upper")
        lower, upper = _clamp_band(self.lower, data.shape[1]), _clamp_band(self.upper, data.shape[1])
        if (lower, upper) != (self.lower, self.upper):
            # rows for offsets past n - 1 cover no entries
            data = np.array(data[self.upper - upper: self.upper + lower + 1])
            object.__setattr__(self, "lower", lower)
            object.__setattr__(self, "upper", upper)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    # construction

    @classmethod
    def from_sparse(cls, S, lower: Optional[int] = None, upper: Optional[int] = None,
                    symmetric: bool = False) -> "BandedMatrix":
        """Build from any scipy.sparse matrix; bandwidths are measured when omitted."""
        S = sp.csr_matrix(S)
        n = S.shape[0]
        if S.shape != (n, n):
            raise ValidationError(f"banded matrices are square, got {S.shape}")
        coo = S.tocoo()
        nonzero = coo.data != 0
        offsets = coo.col[nonzero].astype(np.int64) - coo.row[nonzero].astype(np.int64)
        lo_measured = int(max(0, -offsets.min())) if offsets.size else 0
        up_measured = int(max(0, offsets.max())) if offsets.size else 0
        lower = lo_measured if lower is None else lower
        upper = up_measured if upper is None else upper
        if lo_measured > lower or up_measured > upper:
            raise ValidationError(
                f"entries outside the declared band ({lower}, {upper})"
            )
        if symmetric:
            lower = upper = max(lower, upper)
        lower, upper = _clamp_band(lower, n), _clamp_band(upper, n)
        data = np.zeros((lower + upper + 1, n))
        for offset in range(-lower, upper + 1):
            diag = S.diagonal(offset)
            row = upper - offset
            if offset >= 0:
                data[row, offset:] = diag
            else:
                data[row, : n + offset] = diag
        return cls(data, lower, upper, symmetric)

    @classmethod
    def from_dense(cls, M: np.ndarray, lower: Optional[int] = None, upper: Optional[int] = None,
                   symmetric: bool = False) -> "BandedMatrix":
        return cls.from_sparse(sp.csr_matrix(np.asarray(M, dtype=float)), lower, upper, symmetric)

    @classmethod
    def from_diagonals(cls, n: int, diagonals: Dict[int, Union[float, np.ndarray]],
                       symmetric: bool = False) -> "BandedMatrix":
        """Build from ``{offset: values}``; scalars are broadcast along the diagonal."""
        diagonals = {k: v for k, v in diagonals.items() if abs(k) < n}
        lower = max([0] + [-k for k in diagonals])
        upper = max([0] + [k for k in diagonals])
        if symmetric:
            lower = upper = max(lower, upper)
        data = np.zeros((lower + upper + 1, n))
        for offset, values in diagonals.items():
            length = n - abs(offset)
            values = np.broadcast_to(np.asarray(values, dtype=float), (length,))
            row = upper - offset
            if offset >= 0:
                data[row, offset:] = values
            else:
                data[row, : n + offset] = values
        if symmetric:
            for offset in range(1, upper + 1):
                if offset in diagonals and -offset not in diagonals:
                    data[upper + offset, : n - offset] = data[upper - offset, offset:]
                elif -offset in diagonals and offset not in diagonals:
                    data[upper - offset, offset:] = data[upper + offset, : n - offset]
        return cls(data, lower, upper, symmetric)

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> "BandedMatrix":
        return cls(np.full((1, n), float(scale)), 0, 0, True)

    @classmethod
    def zeros(cls, n: int) -> "BandedMatrix":
        return cls(np.zeros((1, n)), 0, 0, True)

    # views

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def bandwidth(self) -> int:
        return max(self.lower, self.upper)

    @functools.cached_property
    def _csr(self) -> sp.csr_matrix:
        offsets = np.arange(self.upper, -self.lower - 1, -1)
        return sp.dia_matrix((self.data, offsets), shape=self.shape).tocsr()

    def to_sparse(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self, offset: int = 0) -> np.ndarray:
        if offset > self.upper or -offset > self.lower:
            return np.zeros(max(self.n - abs(offset), 0))
        row = self.upper - offset
        if offset >= 0:
            return self.data[row, offset:].copy()
        return self.data[row, : self.n + offset].copy()

    def measured_bandwidth(self, tol: float = 0.0) -> int:
        """Largest |i - j| carrying an entry above ``tol`` in magnitude."""
        active = np.flatnonzero(np.any(np.abs(self.data) > tol, axis=1))
        if active.size == 0:
            return 0
        offsets = self.upper - active
        return int(np.abs(offsets).max())

    # arithmetic

    @property
    def T(self) -> "BandedMatrix":
        if self.symmetric:
            return self
        return BandedMatrix.from_sparse(self._csr.T, self.upper, self.lower)

    def _combine(self, other: "BandedMatrix", alpha: float) -> "BandedMatrix":
        if self.n != other.n:
            raise ValidationError(f"size mismatch {self.n} vs {other.n}")
        lower = max(self.lower, other.lower)
        upper = max(self.upper, other.upper)
        data = np.zeros((lower + upper + 1, self.n))
        data[upper - self.upper: upper + self.lower + 1] += self.data
        data[upper - other.upper: upper + other.lower + 1] += alpha * other.data
        return BandedMatrix(data, lower, upper, self.symmetric and other.symmetric)

    def __add__(self, other: "BandedMatrix") -> "BandedMatrix":
        return self._combine(other, 1.0)

    def __sub__(self, other: "BandedMatrix") -> "BandedMatrix":
        return self._combine(other, -1.0)

    def __neg__(self) -> "BandedMatrix":
        return BandedMatrix(-self.data, self.lower, self.upper, self.symmetric)

    def __mul__(self, alpha: float) -> "BandedMatrix":
        return BandedMatrix(alpha * self.data, self.lower, self.upper, self.symmetric)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, BandedMatrix):
            product = self._csr @ other._csr
            return BandedMatrix.from_sparse(
                product, self.lower + other.lower, self.upper + other.upper
            )
        return self._csr @ np.asarray(other)

    def inner(self, other: "BandedMatrix") -> float:
        """Frobenius inner product trace(selfᵀ·other)."""
        return float(self._csr.multiply(other._csr).sum())

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def symmetrized(self) -> "BandedMatrix":
        """(M + Mᵀ)/2 flagged symmetric."""
        if self.symmetric:
            return self
        width = max(self.lower, self.upper)
        S = 0.5 * (self._csr + self._csr.T)
        return BandedMatrix.from_sparse(S, width, width, symmetric=True)

    def shifted(self, sigma: float) -> "BandedMatrix":
        """M + sigma·I."""
        data = self.data.copy()
        data[self.upper] += sigma
        return BandedMatrix(data, self.lower, self.upper, self.symmetric)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve M·x = rhs with LAPACK banded LU."""
        try:
            return solve_banded((self.lower, self.upper), self.data, rhs, check_finite=False)
        except LinAlgError as exc:
            raise SingularMatrixError(f"banded solve failed: {exc}") from exc

    def upper_storage(self) -> np.ndarray:
        """Upper symmetric storage accepted by ``cholesky_banded``."""
        return np.array(self.data[: self.upper + 1])


def band_truncate(M, s: int) -> BandedMatrix:
    """Keep entries with |i - j| <= s and drop the rest."""
    if s < 0:
        raise ValidationError("truncation bandwidth must be nonnegative")
    if isinstance(M, BandedMatrix):
        lower, upper = min(M.lower, s), min(M.upper, s)
        rows = M.data[M.upper - upper: M.upper + lower + 1]
        return BandedMatrix(rows, lower, upper, M.symmetric)
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    width = min(s, n - 1)
    kept = np.triu(np.tril(M, width), -width)
    return BandedMatrix.from_dense(kept, width, width)


def lambda_min_banded(Q: BandedMatrix, rtol: float = 1e-12, max_steps: int = 200) -> float:
    """Smallest eigenvalue of a symmetric banded matrix by inertia bisection.

    Q - σI is positive definite exactly when σ < λ_min, which a banded
    Cholesky attempt decides in O(n·β²).
    """
    if not Q.symmetric:
        if (Q - Q.T).frobenius_norm() > 1e-12 * max(Q.frobenius_norm(), 1.0):
            raise ValidationError("lambda_min_banded needs a symmetric matrix")
        Q = Q.symmetrized()

    diag = Q.diagonal(0)
    radii = np.asarray(abs(Q.to_sparse()).sum(axis=1)).ravel() - np.abs(diag)
    scale = max(np.abs(diag).max() + radii.max(), np.finfo(float).tiny)
    upper_storage = Q.upper_storage()
    width = Q.upper

    def positive_definite(sigma: float) -> bool:
        ab = upper_storage.copy()
        ab[width] -= sigma
        try:
            cholesky_banded(ab, lower=False, check_finite=False)
        except LinAlgError:
            return False
        return True

    hi = float(diag.min())
    lo = float((diag - radii).min())
    step = 1e-12 * scale
    while not positive_definite(lo):
        lo -= step
        step *= 2.0
    floor = 4.0 * np.finfo(float).eps * scale
    for _ in range(max_steps):
        if hi - lo <= max(rtol * max(abs(lo), abs(hi)), floor):
            break
        mid = 0.5 * (lo + hi)
        if positive_definite(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
