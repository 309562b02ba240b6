"""Result rows and writers for experiment output."""
import csv
import math
import os
import threading
from typing import Any, Dict, Iterable, List, Optional

import numpy as np


def _clean(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class ReportTemplates:
    """Row builders shared by the experiments.

    Every row starts with ``experiment``, ``seed`` and ``config_hash`` so
    reruns of one config can be compared column by column.
    """

    @staticmethod
    def base(experiment: str, seed: int, config_hash: str, **kwargs) -> Dict[str, Any]:
        row = {"experiment": experiment, "seed": seed, "config_hash": config_hash}
        row.update({key: _clean(value) for key, value in kwargs.items()})
        return row

    @staticmethod
    def decay(seed: int, config_hash: str, case: str, n: int, kappa: float, l: int,
              sigma: float, normalized: float, bound_sym: Optional[float],
              bound_shifted: Optional[float]) -> Dict[str, Any]:
        return ReportTemplates.base(
            "decay", seed, config_hash, case=case, n=n, kappa=kappa, l=l,
            sigma_off=sigma, sigma_off_normalized=normalized,
            bound_sym=bound_sym, bound_shifted=bound_shifted,
        )

    @staticmethod
    def dac(seed: int, config_hash: str, test: int, n: int, r: Optional[int], seconds: float,
            residual: float, rank: int, depth: int, status: str = "ok") -> Dict[str, Any]:
        return ReportTemplates.base(
            "dac_bench", seed, config_hash, test=test, n=n, r=r, time=seconds,
            res=residual, rank=rank, depth=depth, status=status,
        )

    @staticmethod
    def tink_step(seed: int, config_hash: str, study: str, variant: str, n: int,
                  step: Dict[str, Any]) -> Dict[str, Any]:
        return ReportTemplates.base(
            "tink_bench", seed, config_hash, study=study, variant=variant, n=n,
            k=step["k"], riccati_est=step["riccati_est"], bandwidth=step["bandwidth"],
            lam=step["lambda"], s=step["s"], inner=step["inner_iterations"],
            inner_solver=step["inner_solver"],
        )

    @staticmethod
    def solver_summary(seed: int, config_hash: str, study: str, variant: str, n: int,
                       solver: str, seconds: float, structure: Optional[int],
                       residual: float, iterations: int, status: str = "ok") -> Dict[str, Any]:
        return ReportTemplates.base(
            "tink_bench", seed, config_hash, study=study, variant=variant, n=n,
            solver=solver, time=seconds, structure=structure, res=residual,
            iterations=iterations, status=status,
        )

    @staticmethod
    def control(experiment: str, seed: int, config_hash: str, n: int, solver: str,
                variant: str, seconds_per_control: float, structure: Optional[float],
                total_cost: float, final_norm: float, status: str = "ok") -> Dict[str, Any]:
        return ReportTemplates.base(
            experiment, seed, config_hash, n=n, solver=solver, variant=variant,
            time_per_control=seconds_per_control, mean_structure=structure,
            total_cost=total_cost, final_sup_norm=final_norm, status=status,
        )

    @staticmethod
    def check(seed: int, config_hash: str, name: str, passed: bool, detail: str,
              seconds: float) -> Dict[str, Any]:
        return ReportTemplates.base(
            "verify", seed, config_hash, check=name, passed=passed, detail=detail, time=seconds,
        )

    @staticmethod
    def failure(experiment: str, seed: int, config_hash: str, row_key: str,
                error: BaseException) -> Dict[str, Any]:
        return ReportTemplates.base(
            experiment, seed, config_hash, row_key=row_key, status="failed",
            error_type=type(error).__name__, message=str(error),
        )


class ResultWriter:
    """CSV with header plus a whitespace-delimited ``.dat`` twin.

    Columns come from the constructor or the first row written; missing
    values are written empty and keys outside the header are dropped.
    Writes are serialized by a lock.
    """

    def __init__(self, path: str, columns: Optional[List[str]] = None):
        self.path = path
        root, _ = os.path.splitext(path)
        self.dat_path = root + ".dat"
        self.columns = list(columns) if columns else None
        self.rows_written = 0
        self._lock = threading.Lock()
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        for target in (self.path, self.dat_path):
            if os.path.exists(target):
                os.remove(target)

    def _start(self, row: Dict[str, Any]) -> None:
        if self.columns is None:
            self.columns = list(row)
        with open(self.path, "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerow(self.columns)
        with open(self.dat_path, "w", encoding="utf-8") as handle:
            handle.write("# " + " ".join(self.columns) + "\n")

    def write(self, row: Dict[str, Any]) -> None:
        with self._lock:
            if self.rows_written == 0:
                self._start(row)
            values = [_clean(row.get(column, "")) for column in self.columns]
            with open(self.path, "a", newline="", encoding="utf-8") as handle:
                csv.writer(handle).writerow(values)
            with open(self.dat_path, "a", encoding="utf-8") as handle:
                handle.write(" ".join(_dat_field(v) for v in values) + "\n")
            self.rows_written += 1

    def write_many(self, rows: Iterable[Dict[str, Any]]) -> None:
        for row in rows:
            self.write(row)


def _dat_field(value: Any) -> str:
    if value is None or value == "":
        return "nan"
    text = str(value)
    return text.replace(" ", "_") if text else "nan"


def write_trajectory(trajectory, path: str, stride: int = 0) -> str:
    """Export time, ‖y‖₂, ‖u‖₂ and running cost; with ``stride`` > 0 also full states.

    Snapshots go to ``<path>.states.csv`` with one row per ``stride``-th step.
    """
    writer = ResultWriter(path, ["t", "state_norm", "control_norm", "running_cost"])
    for t, y, u, cost in zip(trajectory.times, trajectory.states, trajectory.controls,
                             trajectory.running_cost):
        writer.write({
            "t": float(t), "state_norm": float(np.linalg.norm(y)),
            "control_norm": float(np.linalg.norm(u)), "running_cost": float(cost),
        })
    if stride > 0:
        root, _ = os.path.splitext(path)
        snapshots = ResultWriter(root + ".states.csv",
                                 ["t"] + [f"y{i}" for i in range(trajectory.states.shape[1])])
        for index in range(0, len(trajectory.times), stride):
            row = {"t": float(trajectory.times[index])}
            row.update({f"y{i}": float(v) for i, v in enumerate(trajectory.states[index])})
            snapshots.write(row)
    return path
