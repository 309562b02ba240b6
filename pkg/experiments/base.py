"""Shared machinery for experiment modules."""
import asyncio
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence

import numpy as np

from sdre.feedback import IntegratorOptions, integrate_closed_loop
from utils.config import ExperimentConfig
from utils.database import db
from utils.errors import RiccatiError
from utils.reports import ReportTemplates, ResultWriter, write_trajectory

logger = logging.getLogger(__name__)

FAILURE_COLUMNS = ["row_key", "status", "error_type", "message"]


@dataclass
class RowTask:
    """One independent unit of work producing zero or more result rows."""

    key: str
    func: Callable[[], List[Dict[str, Any]]]


@dataclass
class RunSummary:
    run_id: str
    path: str
    rows: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def row_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for one row, independent of the order rows are run in."""
    return np.random.default_rng([int(seed), *[int(k) for k in keys]])


class Experiment:
    """Base class for experiments registered with the suite.

    Subclasses set ``name`` (the CLI subcommand), ``config_name`` (the
    schema key and output file stem) and ``columns``, and implement
    ``tasks``. Rows run in worker threads, at most ``config.threads`` at a
    time; a RiccatiError in one row is recorded and the run continues.
    """

    name = "experiment"
    config_name = "experiment"
    columns: Sequence[str] = ()
    # failed rows make the run fail (used by verify)
    strict = False

    def __init__(self, suite):
        self.suite = suite

    def tasks(self, config: ExperimentConfig) -> List[RowTask]:
        raise NotImplementedError

    def output_path(self, config: ExperimentConfig) -> str:
        return os.path.join(config.out, f"{self.config_name}.csv")

    def failure_row(self, config: ExperimentConfig, key: str, error: BaseException) -> Dict[str, Any]:
        return ReportTemplates.failure(self.config_name, config.seed, config.config_hash, key, error)

    async def run(self, config: ExperimentConfig) -> RunSummary:
        tasks = self.tasks(config)
        columns = list(self.columns)
        columns += [c for c in FAILURE_COLUMNS if c not in columns]
        writer = ResultWriter(self.output_path(config), ["experiment", "seed", "config_hash"] + columns)
        run_id = await db.start_run(self.config_name, config.config_hash, config.seed)
        summary = RunSummary(run_id, writer.path)
        semaphore = asyncio.Semaphore(config.threads)
        counter = {"index": 0}
        ledger_lock = asyncio.Lock()

        async def record(rows: List[Dict[str, Any]]) -> None:
            async with ledger_lock:
                for row in rows:
                    writer.write(row)
                    await db.record_row(run_id, counter["index"], row)
                    counter["index"] += 1
                    summary.rows += 1

        async def run_task(task: RowTask) -> None:
            async with semaphore:
                try:
                    rows = await asyncio.to_thread(task.func)
                except RiccatiError as exc:
                    logger.warning(f"{self.name}: row {task.key} failed: {exc}")
                    summary.failures.append(task.key)
                    await db.record_failure(run_id, task.key, exc)
                    await record([self.failure_row(config, task.key, exc)])
                    return
                await record(rows)
                if self.strict and any(row.get("passed") is False for row in rows):
                    summary.failures.append(task.key)

        logger.info(f"{self.name}: {len(tasks)} task(s), threads={config.threads}, "
                    f"config={config.config_hash[:12]}")
        try:
            await asyncio.gather(*(run_task(task) for task in tasks))
        except Exception:
            await db.finish_run(run_id, "error")
            raise
        await db.finish_run(run_id, "done" if summary.ok else "partial")
        logger.info(f"{self.name}: wrote {summary.rows} row(s) to {summary.path}, "
                    f"{len(summary.failures)} failure(s)")
        return summary


class ControlExperiment(Experiment):
    """Experiments that simulate SDRE closed loops and export their trajectories."""

    columns = ["n", "solver", "variant", "time_per_control", "mean_structure",
               "total_cost", "final_sup_norm", "status"]

    def trajectory_path(self, config: ExperimentConfig, n: int, solver: str,
                        variant: str, seed: int) -> str:
        name = f"{self.config_name}_n{n}_{solver}_{variant}_seed{seed}.csv"
        return os.path.join(config.out, "trajectories", name)

    def simulate(self, config: ExperimentConfig, seed: int, model, y0: np.ndarray,
                 solver, variant: str, opts: IntegratorOptions, controlled: bool = True):
        """Integrate one closed loop (or open loop) and return (trajectory, row)."""
        label = solver.name if controlled else "none"
        trajectory = integrate_closed_loop(model, y0, config.get("T"), opts, solver, controlled)
        write_trajectory(trajectory, self.trajectory_path(config, model.n, label, variant, seed),
                         config.get("snapshot_stride"))
        row = ReportTemplates.control(
            self.config_name, seed, config.config_hash, model.n, label, variant,
            trajectory.mean_solve_time(), trajectory.mean_structure(), trajectory.total_cost,
            float(np.max(np.abs(trajectory.final_state))),
        )
        return trajectory, row
