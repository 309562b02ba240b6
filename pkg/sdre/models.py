"""Control models for the state-dependent Riccati feedback loop.

A model provides the frozen coefficients of

    A(y)ᵀX + XA(y) − X·B(y)R⁻¹B(y)ᵀ·X + Q = 0

at a state y, the dynamics ẏ = A(y)y + B(y)u, the running cost
yᵀQy + uᵀRu and, when one exists, a closed-form solution.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np

from linalg.banded import BandedMatrix
from linalg.dense import CareProblem, care_closed_form_sym
from linalg.hmatrix import DEFAULT_N_MIN, HMatrix, hm_from_dense
from utils.errors import ValidationError

logger = logging.getLogger(__name__)


class SdreModel:
    """Base class; subclasses override ``coefficients`` and ``dynamics``.

    ``structure`` names the format ``care_problem`` returns, which decides
    the structured solvers that apply (tink for banded, dac for hierarchical).
    """

    name = "model"
    structure = "dense"

    def __init__(self, n: int):
        if n < 1:
            raise ValidationError("state dimension must be positive")
        self.n = n

    def coefficients(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def care_problem(self, y: np.ndarray) -> CareProblem:
        A, B, Q, R = self.coefficients(y)
        F = B @ np.linalg.solve(R, B.T)
        return CareProblem(A, 0.5 * (F + F.T), Q)

    def closed_form(self, y: np.ndarray) -> Optional[np.ndarray]:
        return None

    def feedback_law(self, y: np.ndarray, X) -> Callable[[np.ndarray], np.ndarray]:
        """z ↦ −R⁻¹B(y)ᵀX·z with the gain frozen at y."""
        _, B, _, R = self.coefficients(y)
        gain = np.linalg.solve(R, B.T)
        return lambda z: -gain @ np.asarray(X @ z)

    def control(self, y: np.ndarray, X) -> np.ndarray:
        """u = −R⁻¹B(y)ᵀX(y)y."""
        return self.feedback_law(y, X)(y)

    def dynamics(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        A, B, _, _ = self.coefficients(y)
        return A @ y + B @ u

    def running_cost(self, y: np.ndarray, u: np.ndarray) -> float:
        _, _, Q, R = self.coefficients(y)
        return float(y @ (Q @ y) + u @ (R @ u))

    def stiff_operator(self) -> Optional[BandedMatrix]:
        """Constant linear part integrated implicitly, if the model has one."""
        return None

    def nonstiff(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.dynamics(y, u)

    def control_dim(self) -> int:
        return self.n


class LinearModel(SdreModel):
    """Constant coefficients; the SDRE loop reduces to LQR."""

    name = "linear"

    def __init__(self, A, B, Q, R):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[0])
        self.A = A
        self.B = np.atleast_2d(np.asarray(B, dtype=float)).reshape(self.n, -1)
        m = self.B.shape[1]
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        if self.Q.shape != (self.n, self.n) or self.R.shape != (m, m):
            raise ValidationError("Q must be n×n and R m×m")
        if np.any(np.linalg.eigvalsh(0.5 * (self.R + self.R.T)) <= 0):
            raise ValidationError("R must be symmetric positive definite")

    def coefficients(self, y):
        return self.A, self.B, self.Q, self.R

    def control_dim(self) -> int:
        return self.B.shape[1]


def linear_model(A, B, Q, R) -> LinearModel:
    return LinearModel(A, B, Q, R)


class AllenCahnModel(SdreModel):
    """ẏ = σA₀y + y − y³ + u on [−L, L] with Neumann boundary conditions.

    A(y) = σA₀ + I − diag(y ⊙ y), B = I, Q = Δx·I, R = γ·I with γ = γ̃·Δx,
    so the running cost is Δx·yᵀy + γ·uᵀu.
    """

    name = "allen_cahn"
    structure = "banded"

    def __init__(self, n: int, L: float = 1.0, sigma: float = 1e-3, gamma_tilde: float = 0.1):
        if n < 3:
            raise ValidationError("allen_cahn_model needs n >= 3")
        if L <= 0 or sigma <= 0 or gamma_tilde <= 0:
            raise ValidationError("L, sigma and gamma_tilde must be positive")
        super().__init__(n)
        self.L = L
        self.sigma = sigma
        self.dx = 2.0 * L / (n - 1)
        self.gamma = gamma_tilde * self.dx
        self.grid = -L + self.dx * np.arange(n)
        main = np.full(n, -2.0)
        main[0] = main[-1] = -1.0
        scale = 1.0 / self.dx ** 2
        self.laplacian = BandedMatrix.from_diagonals(
            n, {-1: scale, 0: scale * main, 1: scale}, symmetric=True
        )
        self.diffusion = sigma * self.laplacian

    def initial_state(self) -> np.ndarray:
        return np.sin(math.pi * self.grid)

    def A_of(self, y: np.ndarray) -> BandedMatrix:
        return self.diffusion + BandedMatrix(
            np.atleast_2d(1.0 - y * y), 0, 0, True
        )

    def coefficients(self, y):
        return (self.A_of(y).to_dense(), np.eye(self.n),
                self.dx * np.eye(self.n), self.gamma * np.eye(self.n))

    def care_problem(self, y):
        return CareProblem.from_banded(
            self.A_of(y),
            BandedMatrix.identity(self.n, 1.0 / self.gamma),
            BandedMatrix.identity(self.n, self.dx),
        )

    def closed_form(self, y):
        return care_closed_form_sym(self.A_of(y).to_dense(), self.dx * np.eye(self.n), self.gamma)

    def feedback_law(self, y, X):
        return lambda z: -np.asarray(X @ z) / self.gamma

    def dynamics(self, y, u):
        return self.diffusion @ y + y - y ** 3 + u

    def running_cost(self, y, u):
        return float(self.dx * (y @ y) + self.gamma * (u @ u))

    def stiff_operator(self):
        return self.diffusion

    def nonstiff(self, y, u):
        return y - y ** 3 + u


def allen_cahn_model(n: int, L: float = 1.0, sigma: float = 1e-3,
                     gamma_tilde: float = 0.1) -> AllenCahnModel:
    return AllenCahnModel(n, L, sigma, gamma_tilde)


def interaction_matrix(positions: np.ndarray) -> np.ndarray:
    """𝒜 with off-diagonal K(yᵢ, yⱼ)/N, K = 1/(1 + |yᵢ − yⱼ|²), and zero row sums."""
    positions = np.asarray(positions, dtype=float)
    N = positions.size
    K = 1.0 / (1.0 + np.subtract.outer(positions, positions) ** 2)
    np.fill_diagonal(K, 0.0)
    M = K / N
    M[np.diag_indices(N)] = -M.sum(axis=1)
    return M


class CuckerSmaleModel(SdreModel):
    """Agents on a line with state (y, v) ∈ ℝ²ᴺ, ẏ = v, v̇ = 𝒜(y)v + u.

    With Q = R = I/N the SDRE reduces to 𝒜X₂₂ + X₂₂𝒜 − N·X₂₂² + (3/N)I = 0
    and X₁₂ = X₂₁ = I/N, which gives u = −y − N·X₂₂v. The reduced solve runs
    on positions sorted increasingly; the control is mapped back afterwards.
    """

    name = "cucker_smale"
    structure = "hierarchical"

    def __init__(self, agents: int, sort: bool = True, n_min: int = DEFAULT_N_MIN,
                 compression_tol: float = 1e-10):
        if agents < 2:
            raise ValidationError("cucker_smale_model needs at least 2 agents")
        super().__init__(2 * agents)
        self.agents = agents
        self.sort = sort
        self.n_min = n_min
        self.compression_tol = compression_tol

    def split(self, state: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        state = np.asarray(state, dtype=float)
        return state[: self.agents], state[self.agents:]

    def permutation(self, y: np.ndarray) -> np.ndarray:
        if self.sort:
            return np.argsort(y, kind="stable")
        return np.arange(self.agents)

    def reduced_matrix(self, state: np.ndarray) -> np.ndarray:
        """𝒜 on the (possibly sorted) positions."""
        y, _ = self.split(state)
        return interaction_matrix(y[self.permutation(y)])

    def coefficients(self, state):
        N = self.agents
        y, _ = self.split(state)
        A = np.zeros((2 * N, 2 * N))
        A[:N, N:] = np.eye(N)
        A[N:, N:] = interaction_matrix(y)
        B = np.vstack([np.zeros((N, N)), np.eye(N)])
        return A, B, np.eye(2 * N) / N, np.eye(N) / N

    def care_problem(self, state):
        N = self.agents
        M = self.reduced_matrix(state)
        A = hm_from_dense(M, self.compression_tol, self.n_min)
        F = HMatrix.identity(N, self.n_min, float(N))
        Q = HMatrix.identity(N, self.n_min, 3.0 / N)
        return CareProblem.from_hierarchical(A, F, Q)

    def dense_problem(self, state) -> CareProblem:
        N = self.agents
        return CareProblem(self.reduced_matrix(state), N * np.eye(N), 3.0 / N * np.eye(N))

    def closed_form(self, state):
        """(√(𝒜² + 3I) + 𝒜)/N in the solver's (sorted) ordering."""
        N = self.agents
        return care_closed_form_sym(self.reduced_matrix(state), 3.0 / N * np.eye(N), 1.0 / N)

    def feedback_law(self, state, X22):
        y, _ = self.split(state)
        perm = self.permutation(y)
        N = self.agents

        def law(z: np.ndarray) -> np.ndarray:
            position, velocity = self.split(z)
            pushed = np.empty(N)
            pushed[perm] = np.asarray(X22 @ velocity[perm])
            return -position - N * pushed
        return law

    def dynamics(self, state, u):
        y, v = self.split(state)
        return np.concatenate([v, interaction_matrix(y) @ v + u])

    def running_cost(self, state, u):
        return float((state @ state + u @ u) / self.agents)

    def control_dim(self) -> int:
        return self.agents

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        """Positions and velocities drawn uniformly from [0, 1]."""
        return rng.uniform(0.0, 1.0, 2 * self.agents)


def cucker_smale_model(agents: int, sort: bool = True, n_min: int = DEFAULT_N_MIN,
                       compression_tol: float = 1e-10) -> CuckerSmaleModel:
    return CuckerSmaleModel(agents, sort, n_min, compression_tol)
