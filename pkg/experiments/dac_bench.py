import logging
import os
import time
from typing import Any, Dict, List, Optional

from experiments.base import Experiment, RowTask, row_rng
from linalg.container import dump
from solvers.dac import DacOptions, dac_care
from utils.config import ExperimentConfig
from utils.errors import ConfigError, SizeCapError
from utils.generators import DAC_TESTS, dac_test_instance
from utils.reports import ReportTemplates

logger = logging.getLogger(__name__)

RANK_TEST = 5


class DacBenchExperiment(Experiment):
    """Timings, residuals and offdiagonal ranks of dac_care on the five generated tests.

    Tests 1 to 4 sweep ``sizes``; test 5 fixes n = ``rank_size`` and sweeps the
    number of subdiagonals of the Hessenberg factor over ``ranks``. Times are
    averaged over ``repetitions`` solves of the same instance.
    """

    name = "dac-bench"
    config_name = "dac_bench"
    columns = ["test", "n", "r", "time", "res", "rank", "depth", "status"]

    def tasks(self, config: ExperimentConfig) -> List[RowTask]:
        unknown = [str(test) for test in config.get("tests") if test not in DAC_TESTS]
        if unknown:
            raise ConfigError(f"tests must be drawn from {DAC_TESTS}, got {', '.join(unknown)}")
        tasks = []
        for seed in config.seeds:
            for test in config.get("tests"):
                if test == RANK_TEST:
                    n = config.get("rank_size")
                    for r in config.get("ranks"):
                        tasks.append(RowTask(f"test={test}/n={n}/r={r}/seed={seed}",
                                             self._runner(config, seed, test, n, r)))
                else:
                    for n in config.sizes:
                        tasks.append(RowTask(f"test={test}/n={n}/seed={seed}",
                                             self._runner(config, seed, test, n, None)))
        return tasks

    def _runner(self, config, seed, test, n, r):
        def run() -> List[Dict[str, Any]]:
            return [self.bench_row(config, seed, test, n, r)]
        return run

    @staticmethod
    def options(config: ExperimentConfig) -> DacOptions:
        return DacOptions(
            n_min=config.get("n_min"),
            compression_tol=config.get("compression_tol"),
            eksm_tol=config.get("eksm_tol"),
            s_max=config.get("s_max"),
            parallel=config.get("parallel"),
        )

    def bench_row(self, config: ExperimentConfig, seed: int, test: int, n: int,
                  r: Optional[int]) -> Dict[str, Any]:
        cap = config.get("size_cap")
        if n > cap:
            raise SizeCapError(f"n={n} above the benchmark size cap {cap}")
        opts = self.options(config)
        rng = row_rng(seed, test, n, r or 0)
        A, F, Q = dac_test_instance(test, n, rng, subdiagonals=r or 2,
                                    tol=opts.compression_tol, n_min=opts.n_min)

        repetitions = config.get("repetitions")
        elapsed = 0.0
        for _ in range(repetitions):
            start = time.perf_counter()
            X, report = dac_care(A, F, Q, opts)
            elapsed += time.perf_counter() - start
        seconds = elapsed / repetitions

        status = "ok" if report.converged else "unconverged"
        logger.info(f"dac-bench test {test} n={n} r={r}: {seconds:.2f}s "
                    f"res={report.final_residual:.2e} rank={X.rank}")
        if config.get("checkpoint"):
            name = f"dac_test{test}_n{n}" + (f"_r{r}" if r is not None else "") + f"_seed{seed}.rctr"
            dump(X, os.path.join(config.out, "checkpoints", name))
        return ReportTemplates.dac(seed, config.config_hash, test, n, r, seconds,
                                   report.final_residual, X.rank, X.depth, status)


async def setup(suite):
    await suite.add_experiment(DacBenchExperiment(suite))
