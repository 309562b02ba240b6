import logging
import time
from typing import Any, Dict, List

from experiments.base import Experiment, RowTask
from linalg.dense import SolveReport
from linalg.hmatrix import hm_from_banded
from solvers.dac import DacOptions, dac_care
from solvers.tink import LINESEARCH_MODES, TinkOptions, tink
from utils.config import ExperimentConfig
from utils.errors import ConfigError, ConvergenceError
from utils.generators import kappa_instance, line_search_instance
from utils.reports import ReportTemplates

logger = logging.getLogger(__name__)

STUDIES = ("linesearch", "kappa")


class TinkBenchExperiment(Experiment):
    """Line-search traces and the tink/dac comparison on banded problems.

    The ``linesearch`` study writes one row per outer step for each mode plus
    a summary row; the ``kappa`` study writes summary rows for tink and,
    with ``compare_dac``, for dac_care on the same coefficients.
    """

    name = "tink-bench"
    config_name = "tink_bench"
    columns = ["study", "variant", "n", "solver", "k", "riccati_est", "bandwidth", "lam", "s",
               "inner", "inner_solver", "time", "structure", "res", "iterations", "status"]

    def tasks(self, config: ExperimentConfig) -> List[RowTask]:
        studies = config.get("studies")
        unknown = [s for s in studies if s not in STUDIES]
        if unknown:
            raise ConfigError(f"unknown tink-bench studies: {', '.join(unknown)}")
        tasks = []
        for seed in config.seeds:
            if "linesearch" in studies:
                n = config.get("linesearch_size")
                for mode in config.get("linesearch_modes"):
                    if mode not in LINESEARCH_MODES:
                        raise ConfigError(f"linesearch mode must be one of {LINESEARCH_MODES}")
                    tasks.append(RowTask(f"linesearch/{mode}/n={n}/seed={seed}",
                                         self._bind(self.linesearch_rows, config, seed, n, mode)))
            if "kappa" in studies:
                for n in config.sizes:
                    for kappa in config.get("kappas"):
                        tasks.append(RowTask(f"kappa={kappa:g}/n={n}/seed={seed}",
                                             self._bind(self.kappa_rows, config, seed, n, kappa)))
        return tasks

    @staticmethod
    def _bind(func, *args):
        def run() -> List[Dict[str, Any]]:
            return func(*args)
        return run

    @staticmethod
    def options(config: ExperimentConfig, seed: int, linesearch: str = "first") -> TinkOptions:
        return TinkOptions(
            tol=config.get("tol"), k_max=config.get("k_max"), linesearch=linesearch,
            alpha=config.get("alpha"), zeta=config.get("zeta"), s0=config.get("s0"),
            probes=config.get("probes"), seed=seed,
        )

    @staticmethod
    def _run_tink(A, F, Q, opts: TinkOptions):
        """tink, returning the partial report instead of raising when it stalls."""
        start = time.perf_counter()
        try:
            X, report = tink(A, F, Q, opts)
        except ConvergenceError as exc:
            if exc.report is None:
                raise
            logger.warning(f"tink-bench: {exc}")
            return None, exc.report, time.perf_counter() - start
        return X, report, time.perf_counter() - start

    @staticmethod
    def _relative(report: SolveReport, Q) -> float:
        residual = report.notes.get("residual_fro")
        if residual is None:
            return float("nan")
        return residual / max(Q.frobenius_norm(), 1e-300)

    def _tink_summary(self, config, seed, study, variant, n, X, report, seconds, Q):
        status = "ok" if X is not None else "unconverged"
        return ReportTemplates.solver_summary(
            seed, config.config_hash, study, variant, n, "tink", seconds,
            report.notes.get("bandwidth"), self._relative(report, Q),
            report.iterations, status,
        )

    def linesearch_rows(self, config: ExperimentConfig, seed: int, n: int,
                        mode: str) -> List[Dict[str, Any]]:
        A, F, Q = line_search_instance(n)
        X, report, seconds = self._run_tink(A, F, Q, self.options(config, seed, mode))
        rows = [ReportTemplates.tink_step(seed, config.config_hash, "linesearch", mode, n, step)
                for step in report.notes.get("steps", [])]
        rows.append(self._tink_summary(config, seed, "linesearch", mode, n, X, report, seconds, Q))
        return rows

    def kappa_rows(self, config: ExperimentConfig, seed: int, n: int,
                   kappa: float) -> List[Dict[str, Any]]:
        A, F, Q = kappa_instance(n, kappa)
        variant = f"kappa={kappa:g}"
        X, report, seconds = self._run_tink(A, F, Q, self.options(config, seed))
        rows = [self._tink_summary(config, seed, "kappa", variant, n, X, report, seconds, Q)]
        if config.get("compare_dac"):
            n_min = config.get("n_min")
            opts = DacOptions(n_min=n_min, compression_tol=config.get("compression_tol"),
                              eksm_tol=config.get("eksm_tol"))
            start = time.perf_counter()
            H, dac_report = dac_care(hm_from_banded(A, n_min), hm_from_banded(F, n_min),
                                     hm_from_banded(Q, n_min), opts)
            rows.append(ReportTemplates.solver_summary(
                seed, config.config_hash, "kappa", variant, n, "dac",
                time.perf_counter() - start, H.rank, dac_report.final_residual,
                dac_report.iterations, "ok" if dac_report.converged else "unconverged",
            ))
        return rows


async def setup(suite):
    await suite.add_experiment(TinkBenchExperiment(suite))
