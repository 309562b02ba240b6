"""Randomized 2-norm upper bounds from Gaussian probes.

For a matrix M and i.i.d. standard Gaussian ω₁..ω_k,
‖M‖₂ ≤ 2·√(2/π)·maxᵢ ‖M·ωᵢ‖₂ with probability at least 1 − 2⁻ᵏ.
"""
from typing import Callable, Optional

import numpy as np

from utils.errors import ValidationError

SCALE = 2.0 * np.sqrt(2.0 / np.pi)
DEFAULT_PROBES = 10


def make_rng(seed: Optional[int] = 0) -> np.random.Generator:
    """Counter-based generator, reproducible for a given seed."""
    return np.random.Generator(np.random.Philox(seed))


def prob_norm_est(apply: Callable[[np.ndarray], np.ndarray], n: int,
                  probes: int = DEFAULT_PROBES,
                  rng: Optional[np.random.Generator] = None) -> float:
    """Probabilistic upper bound on ‖M‖₂.

    Args:
        apply: Action of M on an n×probes block
        n: Number of columns of M
        probes: Number of Gaussian probe vectors
        rng: Probe generator (a Philox generator seeded with 0 when omitted)

    Returns:
        2·√(2/π)·max ‖M·ωᵢ‖₂
    """
    if probes < 1:
        raise ValidationError("probes must be at least 1")
    rng = make_rng(0) if rng is None else rng
    omega = rng.standard_normal((n, probes))
    images = np.asarray(apply(omega)).reshape(-1, probes)
    return float(SCALE * np.linalg.norm(images, axis=0).max())


def matrix_norm_est(M, probes: int = DEFAULT_PROBES,
                    rng: Optional[np.random.Generator] = None) -> float:
    """``prob_norm_est`` for anything supporting ``M @ block``."""
    return prob_norm_est(lambda W: M @ W, M.shape[1], probes, rng)


class NormEstimator:
    """Stateful estimator drawing fresh probes from one seeded stream.

    Every call advances the stream, so a solver run is reproducible
    given the seed and the sequence of calls.
    """

    def __init__(self, seed: Optional[int] = 0, probes: int = DEFAULT_PROBES):
        if probes < 1:
            raise ValidationError("probes must be at least 1")
        self.rng = make_rng(seed)
        self.probes = probes
        self.calls = 0

    def __call__(self, apply: Callable[[np.ndarray], np.ndarray], n: int) -> float:
        self.calls += 1
        return prob_norm_est(apply, n, self.probes, self.rng)

    def matrix(self, M) -> float:
        return self(lambda W: M @ W, M.shape[1])
