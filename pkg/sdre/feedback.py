"""State-dependent Riccati feedback and closed-loop simulation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp

from linalg.banded import BandedMatrix
from linalg.dense import CareProblem, dense_care
from linalg.hmatrix import hm_from_banded
from sdre.models import SdreModel
from solvers.dac import DacOptions, dac_care
from solvers.tink import TinkOptions, tink
from utils.errors import IntegrationError, RiccatiError, ValidationError

logger = logging.getLogger(__name__)

SOLVERS = ("tink", "dac", "dense", "closed_form")
INTEGRATORS = ("auto", "imex", "rk45")


@dataclass
class StepStats:
    """Cost of one SDRE solve; ``structure`` is a bandwidth or an offdiagonal rank."""

    seconds: float
    structure: Optional[int] = None
    iterations: Optional[int] = None


class FeedbackSolver:
    """Solves the frozen CARE with one of ``tink``, ``dac``, ``dense`` or ``closed_form``.

    tink is warm started from the previous solution; the cache is dropped
    by ``reset``.
    """

    def __init__(self, name: str = "dense", tink_opts: Optional[TinkOptions] = None,
                 dac_opts: Optional[DacOptions] = None):
        if name not in SOLVERS:
            raise ValidationError(f"solver must be one of {SOLVERS}, got {name!r}")
        self.name = name
        self.tink_opts = tink_opts or TinkOptions()
        self.dac_opts = dac_opts or DacOptions()
        self._previous: Optional[BandedMatrix] = None

    def reset(self) -> None:
        self._previous = None

    def solve(self, model: SdreModel, y: np.ndarray) -> Tuple[Any, StepStats]:
        start = time.perf_counter()
        if self.name == "closed_form":
            X = model.closed_form(y)
            if X is None:
                raise ValidationError(f"model {model.name!r} has no closed-form solution")
            return X, StepStats(time.perf_counter() - start)

        problem = model.care_problem(y)
        if self.name == "dense":
            X, report = dense_care(problem.densified())
            return X, StepStats(time.perf_counter() - start, iterations=report.iterations)

        if self.name == "tink":
            if problem.structure != "banded":
                raise ValidationError(f"tink needs a banded model, {model.name!r} is {problem.structure}")
            X, report = tink(problem.A, problem.F, problem.Q, self.tink_opts, X0=self._previous)
            self._previous = X
            return X, StepStats(time.perf_counter() - start, X.measured_bandwidth(), report.iterations)

        problem = _as_hierarchical(problem, self.dac_opts.n_min)
        X, report = dac_care(problem.A, problem.F, problem.Q, self.dac_opts)
        return X, StepStats(time.perf_counter() - start, X.rank, report.iterations)


def _as_hierarchical(problem: CareProblem, n_min: int) -> CareProblem:
    if problem.structure == "hierarchical":
        return problem
    if problem.structure == "banded":
        return CareProblem.from_hierarchical(
            hm_from_banded(problem.A, n_min), hm_from_banded(problem.F, n_min),
            hm_from_banded(problem.Q, n_min), check_psd=False,
        )
    raise ValidationError("dac needs a banded or hierarchical model")


def _resolve(solver) -> FeedbackSolver:
    return solver if isinstance(solver, FeedbackSolver) else FeedbackSolver(solver)


def sdre_feedback(model: SdreModel, y: np.ndarray, solver="dense") -> np.ndarray:
    """u(y) = −R⁻¹B(y)ᵀX(y)y with X(y) from the chosen solver."""
    y = np.asarray(y, dtype=float)
    X, _ = _resolve(solver).solve(model, y)
    return model.control(y, X)


@dataclass(frozen=True)
class IntegratorOptions:
    """``dt`` is the control sampling step; IMEX also uses it as its time step."""

    method: str = "auto"
    dt: float = 0.05
    rtol: float = 1e-8
    atol: float = 1e-10

    def __post_init__(self):
        if self.method not in INTEGRATORS:
            raise ValidationError(f"method must be one of {INTEGRATORS}")
        if self.dt <= 0:
            raise ValidationError("dt must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_cost: np.ndarray
    stats: List[StepStats] = field(default_factory=list)
    notes: Dict[str, Any] = field(default_factory=dict)

    @property
    def total_cost(self) -> float:
        return float(self.running_cost[-1]) if self.running_cost.size else 0.0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def mean_solve_time(self) -> float:
        return float(np.mean([s.seconds for s in self.stats])) if self.stats else 0.0

    def mean_structure(self) -> Optional[float]:
        values = [s.structure for s in self.stats if s.structure is not None]
        return float(np.mean(values)) if values else None


def _time_grid(T: float, dt: float) -> np.ndarray:
    steps = max(1, int(np.ceil(T / dt - 1e-12)))
    grid = np.minimum(np.arange(steps + 1) * dt, T)
    grid[-1] = T
    return grid


def integrate_closed_loop(model: SdreModel, y0: np.ndarray, T: float,
                          opts: Optional[IntegratorOptions] = None, solver="dense",
                          controlled: bool = True) -> Trajectory:
    """Simulate ẏ = A(y)y + B(y)u with the SDRE feedback recomputed once per step.

    Models with a stiff operator use IMEX Euler (stiff part implicit via a
    banded solve, the rest explicit); all others are integrated with RK45
    over each sampling interval with the gain frozen at its start.
    The running cost is accumulated with the trapezoidal rule on the grid.

    Raises:
        IntegrationError: on a failed solve or step, carrying time and state
    """
    if T <= 0:
        raise ValidationError("T must be positive")
    opts = opts or IntegratorOptions()
    solver = _resolve(solver)
    solver.reset()
    method = opts.method
    if method == "auto":
        method = "imex" if model.stiff_operator() is not None else "rk45"
    if method == "imex" and model.stiff_operator() is None:
        raise ValidationError(f"model {model.name!r} has no stiff operator for IMEX")

    grid = _time_grid(T, opts.dt)
    y = np.asarray(y0, dtype=float).copy()
    if y.shape != (model.n,):
        raise ValidationError(f"initial state has shape {y.shape}, expected {(model.n,)}")
    states, controls, costs, stats = [y.copy()], [], [], []
    m = model.control_dim()
    implicit: Dict[float, BandedMatrix] = {}

    def law_at(t: float, state: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        if not controlled:
            return lambda z: np.zeros(m)
        try:
            X, step_stats = solver.solve(model, state)
        except RiccatiError as exc:
            raise IntegrationError(f"SDRE solve failed: {exc}", t, state.copy()) from exc
        stats.append(step_stats)
        return model.feedback_law(state, X)

    for k in range(len(grid) - 1):
        t, dt = grid[k], grid[k + 1] - grid[k]
        law = law_at(t, y)
        u = law(y)
        controls.append(u)
        costs.append(model.running_cost(y, u))
        if method == "imex":
            if dt not in implicit:
                implicit[dt] = BandedMatrix.identity(model.n) - dt * model.stiff_operator()
            y = implicit[dt].solve(y + dt * model.nonstiff(y, u))
        else:
            result = solve_ivp(lambda _, z: model.dynamics(z, law(z)), (t, t + dt), y,
                               method="RK45", rtol=opts.rtol, atol=opts.atol)
            if result.status < 0:
                raise IntegrationError(f"RK45 failed: {result.message}", t, y.copy())
            y = result.y[:, -1]
        if not np.all(np.isfinite(y)):
            raise IntegrationError("state became non-finite", grid[k + 1], y.copy())
        states.append(y.copy())

    u = law_at(grid[-1], y)(y)
    controls.append(u)
    costs.append(model.running_cost(y, u))

    running = cumulative_trapezoid(np.asarray(costs), grid, initial=0.0)
    trajectory = Trajectory(grid, np.vstack(states), np.vstack(controls), running, stats)
    trajectory.notes.update(method=method, solver=solver.name, controlled=controlled)
    logger.info(f"integrate_closed_loop: {model.name} n={model.n} steps={len(grid) - 1} "
                f"solver={solver.name} cost={trajectory.total_cost:.6g}")
    return trajectory
