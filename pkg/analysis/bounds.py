"""Computable decay bounds for the offdiagonal singular values of CARE solutions.

All Zolotarev sets are real intervals E = [−b, −a] paired with −E = [a, b],
for which Z_h(E, −E) ≤ 4ρ^{−2h} with ρ = exp(π² / (2·log(4b/a))).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from utils.errors import ValidationError

SHIFT_CONSTANT = (1.0 + math.sqrt(2.0)) ** 2
MAX_H = 10 ** 6
CASES = ("low_rank_F", "full_rank_F")


def _check_interval(a: float, b: float) -> None:
    if not a > 0:
        raise ValidationError(f"interval must stay away from the imaginary axis, got a={a}")
    if not a < b:
        raise ValidationError(f"degenerate interval: a={a} >= b={b}")


def zolotarev_log_rho(a: float, b: float) -> float:
    """log ρ for the interval pair [−b, −a], [a, b]."""
    _check_interval(a, b)
    return math.pi ** 2 / (2.0 * math.log(4.0 * b / a))


def zolotarev_interval_bound(h: int, a: float, b: float) -> float:
    """Upper bound min(1, 4ρ^{−2h}) on Z_h([−b, −a], [a, b])."""
    if h < 0:
        raise ValidationError("h must be nonnegative")
    log_rho = zolotarev_log_rho(a, b)
    if h == 0:
        return 1.0
    log_value = math.log(4.0) - 2.0 * h * log_rho
    return 1.0 if log_value >= 0 else math.exp(log_value)


@dataclass(frozen=True)
class DecayBound:
    """Bound σ_{index}(M)/‖X‖₂ ≤ value for every offdiagonal block M."""

    h: int
    index: int
    value: float


def _block_width(r_a: int, r_q: int) -> int:
    if r_a < 0 or r_q < 0:
        raise ValidationError("quasiseparable ranks must be nonnegative")
    t = 4 * r_a + 2 * r_q
    if t < 1:
        raise ValidationError("t must be >= 1 (r_a and r_q cannot both vanish)")
    return t


def decay_bound_sym(h: int, interval: Tuple[float, float], norm_q: float,
                    r_a: int, r_q: int) -> DecayBound:
    """Decay bound for symmetric negative definite A with spectrum in [−b, −a] and F = I.

    Args:
        h: Degree of the rational function
        interval: (−b, −a)
        norm_q: ‖Q‖₂
        r_a, r_q: Quasiseparable orders of A and Q

    Returns:
        DecayBound at index h·t + 1 with t = 4r_a + 2r_q and
        E = [−√(b² + ‖Q‖₂), −a]
    """
    t = _block_width(r_a, r_q)
    lo, hi = interval
    a, b = -hi, -lo
    _check_interval(a, b)
    if norm_q < 0:
        raise ValidationError("norm_q must be nonnegative")
    value = zolotarev_interval_bound(h, a, math.sqrt(b * b + norm_q))
    return DecayBound(h, h * t + 1, value)


def decay_bound_shifted(h: int, numerical_range: Tuple[float, float], norm_q: float,
                        r_a: int, r_q: int) -> DecayBound:
    """Decay bound for nonsymmetric A with real numerical range in [−β, −α] and F = I.

    E = 𝒲(A) + [−τ − √(τ² + ‖Q‖₂), 0] with τ = β, and the bound carries the
    factor (1 + √2)².
    """
    t = _block_width(r_a, r_q)
    lo, hi = numerical_range
    alpha, beta = -hi, -lo
    _check_interval(alpha, beta)
    if norm_q < 0:
        raise ValidationError("norm_q must be nonnegative")
    tau = beta
    far = beta + tau + math.sqrt(tau * tau + norm_q)
    value = min(1.0, SHIFT_CONSTANT * zolotarev_interval_bound(h, alpha, far))
    return DecayBound(h, h * t + 1, value)


def tt_core_rank(h: int, r_a: int, r_f: int, r_q: int, case: str) -> int:
    """Quasiseparable order c(h) of the truncated solution."""
    if min(h, r_a, r_f, r_q) < 0:
        raise ValidationError("h and the ranks must be nonnegative")
    if case == "low_rank_F":
        return 2 * h * r_a + r_f + r_q
    if case == "full_rank_F":
        return h * (4 * r_a + 6 * r_f + 2 * r_q) + r_f
    raise ValidationError(f"case must be one of {CASES}, got {case!r}")


@dataclass(frozen=True)
class TTRankBound:
    h: int
    core_rank: int
    threshold: float
    ranks: np.ndarray

    def as_rows(self):
        return [{"j": j + 1, "r_j": int(r)} for j, r in enumerate(self.ranks)]


def tt_rank_bound(eps: float, M: float, n: int, norm_x: float, r_a: int, r_f: int, r_q: int,
                  case: str, interval: Tuple[float, float], kappa_f: float = 1.0) -> TTRankBound:
    """TT-rank bounds r_j ≤ min(c(h), min(j, n − j)) + 2 of the approximate value function.

    h is the smallest integer with Z_h(E, −E) ≤ ε / (2(1+√2)²·M²·‖X‖₂·√n),
    with an extra κ(F) in the denominator for full-rank F.

    Args:
        eps: Target uniform error on the ball of radius M
        M: Radius of the state ball
        n: State dimension
        norm_x: ‖X‖₂
        r_a, r_f, r_q: Quasiseparable orders (r_f is rank(F) in the low-rank case)
        case: ``low_rank_F`` or ``full_rank_F``
        interval: Zolotarev set E = (−b, −a)
        kappa_f: κ(F), used only for ``full_rank_F``
    """
    if eps <= 0 or M <= 0 or norm_x <= 0 or n < 2:
        raise ValidationError("eps, M and norm_x must be positive and n >= 2")
    if case not in CASES:
        raise ValidationError(f"case must be one of {CASES}, got {case!r}")
    if kappa_f < 1:
        raise ValidationError("kappa_f must be >= 1")
    lo, hi = interval
    a, b = -hi, -lo
    log_rho = zolotarev_log_rho(a, b)
    denominator = 2.0 * SHIFT_CONSTANT * M * M * norm_x * math.sqrt(n)
    if case == "full_rank_F":
        denominator *= kappa_f
    threshold = eps / denominator

    if threshold >= 1.0:
        h = 0
    else:
        # 4ρ^{−2h} ≤ threshold  ⇔  h ≥ log(4/threshold) / (2 log ρ)
        h = max(0, math.ceil(math.log(4.0 / threshold) / (2.0 * log_rho)))
        while h > 0 and zolotarev_interval_bound(h - 1, a, b) <= threshold:
            h -= 1
        while zolotarev_interval_bound(h, a, b) > threshold:
            h += 1
    if h > MAX_H:
        raise ValidationError(f"threshold {threshold:.3e} unreachable within h <= {MAX_H}")

    c = tt_core_rank(h, r_a, r_f, r_q, case)
    j = np.arange(1, n)
    ranks = np.minimum(c, np.minimum(j, n - j)) + 2
    return TTRankBound(h, c, threshold, ranks)
