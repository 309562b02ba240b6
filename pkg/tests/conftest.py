"""Shared fixtures: seeded generators, small structured instances and a scratch ledger."""
import asyncio

import numpy as np
import pytest

from linalg.banded import BandedMatrix
from utils.database import db


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def spd(rng):
    """Factory for well-conditioned symmetric positive definite matrices."""
    def make(n: int, shift: float = 0.5) -> np.ndarray:
        G = rng.standard_normal((n, n))
        return G @ G.T / n + shift * np.eye(n)
    return make


@pytest.fixture
def stable_banded():
    """Nonsymmetric, diagonally dominant stable band of bandwidth 1."""
    def make(n: int, shift: float = 3.0) -> BandedMatrix:
        return BandedMatrix.from_diagonals(n, {-1: 0.4, 0: -shift, 1: -0.7})
    return make


@pytest.fixture
def ledger(tmp_path, monkeypatch):
    """The module-level ledger redirected to a fresh database file."""
    monkeypatch.setattr(db, "db_path", str(tmp_path / "runs.db"))
    asyncio.run(db.init_db())
    return db
