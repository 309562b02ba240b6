"""
Problem generators - Test Suite.

Proves:
 Group 1 - Hessenberg factors
   1.  Orthogonal, zero below the requested subdiagonals, reproducible per seed

 Group 2 - Instances
   2.  Decay instances have the documented spectra and a normalized Q
   3.  D&C test instances are symmetric PSD where required and compress
   4.  Benchmark bands: line-search F = LLᵀ and κ(F) = κ
"""
import numpy as np
import pytest

from utils.errors import ValidationError
from utils.generators import (
    dac_test_dense,
    dac_test_instance,
    decay_instance,
    decay_q,
    kappa_instance,
    line_search_instance,
    random_unitary_hessenberg,
)


# ── Group 1: Hessenberg factors ───────────────────────────────────────────────

@pytest.mark.parametrize("subdiagonals", [1, 3])
def test_hessenberg_is_orthogonal_and_banded(subdiagonals):
    W = random_unitary_hessenberg(30, np.random.default_rng(5), subdiagonals)
    np.testing.assert_allclose(W.T @ W, np.eye(30), atol=1e-12)
    assert np.all(np.tril(W, -subdiagonals - 1) == 0.0)


def test_hessenberg_reproducible():
    first = random_unitary_hessenberg(12, np.random.default_rng(9))
    second = random_unitary_hessenberg(12, np.random.default_rng(9))
    np.testing.assert_array_equal(first, second)
    with pytest.raises(ValidationError):
        random_unitary_hessenberg(0, np.random.default_rng(9))


# ── Group 2: instances ────────────────────────────────────────────────────────

def test_decay_instances():
    n = 20
    A, F, Q = decay_instance(n, "real_spectrum")
    np.testing.assert_allclose(np.sort(np.diag(A)), np.sort(-np.logspace(-3, 0, n)))
    np.testing.assert_array_equal(F, np.eye(n))
    assert np.linalg.norm(Q, 2) == pytest.approx(1.0)
    np.testing.assert_array_equal(Q, decay_q(n))

    A, F, _ = decay_instance(n, "kappa_real", kappa=1e4, rng=np.random.default_rng(1))
    np.testing.assert_allclose(np.linalg.eigvalsh(A), np.sort(-np.logspace(-3, 0, n)), rtol=1e-10)
    w = np.diag(F)
    assert w.max() / w.min() == pytest.approx(1e4)

    A, _, _ = decay_instance(n, "kappa_shifted", rng=np.random.default_rng(1))
    assert np.linalg.eigvals(A).real.max() < 0

    with pytest.raises(ValidationError):
        decay_instance(n, "complex_spectrum")
    with pytest.raises(ValidationError):
        decay_instance(n, "kappa_real", kappa=0.5)


@pytest.mark.parametrize("test_id", [1, 2, 3, 4, 5])
def test_dac_instances(test_id):
    A, F, Q = dac_test_dense(test_id, 48, np.random.default_rng(test_id))
    np.testing.assert_allclose(F, F.T)
    np.testing.assert_allclose(Q, Q.T)
    assert np.linalg.eigvalsh(F)[0] > 0
    assert np.linalg.eigvalsh(Q)[0] > -1e-12
    assert np.linalg.eigvals(A).real.max() < 0


def test_dac_instance_is_hierarchical():
    A, F, Q = dac_test_instance(1, 64, np.random.default_rng(0), n_min=16)
    assert A.depth == F.depth == Q.depth == 2
    with pytest.raises(ValidationError):
        dac_test_dense(6, 16, np.random.default_rng(0))


def test_banded_benchmarks():
    A, F, Q = line_search_instance(10)
    L = np.eye(10) + 0.1 * np.eye(10, k=1)
    np.testing.assert_allclose(F.to_dense(), L @ L.T)
    assert F.symmetric and Q.symmetric
    np.testing.assert_array_equal(np.diag(Q.to_dense(), 1), 0.48)

    _, F, Q = kappa_instance(10, 100.0)
    w = F.diagonal(0)
    assert w.max() / w.min() == pytest.approx(100.0)
    with pytest.raises(ValidationError):
        kappa_instance(10, 0.1)
