import logging
from typing import Any, Dict, List, Optional

from analysis.bounds import decay_bound_shifted, decay_bound_sym
from analysis.offdiag import offdiag_singular_values
from experiments.base import Experiment, RowTask, row_rng
from linalg.dense import CareProblem, dense_care
from utils.config import ExperimentConfig
from utils.errors import ConfigError, SizeCapError
from utils.generators import DECAY_CASES, decay_instance
from utils.reports import ReportTemplates

logger = logging.getLogger(__name__)

DECAY_MAX_N = 1000
# spectrum of A in the real-spectrum and kappa_real cases
SPECTRUM = (-1.0, -1e-3)
# real part of the numerical range of W − 1.1·I for orthogonal W
SHIFTED_RANGE = (-2.1, -0.1)


class DecayExperiment(Experiment):
    """Offdiagonal singular value profiles of dense CARE solutions next to the decay bounds.

    Bounds are only reported where they apply: the symmetric bound when A is
    diagonal and F = I, the shifted bound for the Hessenberg instance with F = I.
    """

    name = "decay"
    config_name = "decay"
    columns = ["case", "n", "kappa", "l", "sigma_off", "sigma_off_normalized",
               "bound_sym", "bound_shifted"]

    def tasks(self, config: ExperimentConfig) -> List[RowTask]:
        unknown = [case for case in config.get("cases") if case not in DECAY_CASES]
        if unknown:
            raise ConfigError(f"unknown decay cases: {', '.join(unknown)}")
        tasks = []
        for seed in config.seeds:
            for n in config.sizes:
                for case in config.get("cases"):
                    kappas = [1.0] if case == "real_spectrum" else config.get("kappas")
                    for index, kappa in enumerate(kappas):
                        key = f"{case}/n={n}/kappa={kappa:g}/seed={seed}"
                        tasks.append(RowTask(key, self._runner(config, seed, n, case, kappa, index)))
        return tasks

    def _runner(self, config: ExperimentConfig, seed: int, n: int, case: str,
                kappa: float, index: int):
        def run() -> List[Dict[str, Any]]:
            return self.profile_rows(config, seed, n, case, kappa, index)
        return run

    def profile_rows(self, config: ExperimentConfig, seed: int, n: int, case: str,
                     kappa: float, index: int = 0) -> List[Dict[str, Any]]:
        if n > DECAY_MAX_N:
            raise SizeCapError(f"decay study is limited to n <= {DECAY_MAX_N}, got {n}")
        rng = row_rng(seed, n, DECAY_CASES.index(case), index)
        A, F, Q = decay_instance(n, case, kappa, rng)
        X, report = dense_care(CareProblem(A, F, Q))
        l_count = min(config.get("l_max"), n - 1)
        profile = offdiag_singular_values(X, l_count)
        normalized = profile.normalized()
        logger.debug(f"decay {case} n={n} kappa={kappa:g}: residual {report.final_residual:.2e}")

        rows = []
        for l in range(1, l_count + 1):
            bound_sym, bound_shifted = self.bounds(case, kappa, l, config.get("h_max"))
            rows.append(ReportTemplates.decay(
                seed, config.config_hash, case, n, kappa, l,
                float(profile.values[l - 1]), float(normalized[l - 1]),
                bound_sym, bound_shifted,
            ))
        return rows

    @staticmethod
    def bounds(case: str, kappa: float, l: int, h_max: int):
        """Bounds at index ``l``; h is the largest degree with h·t + 1 ≤ l, capped at ``h_max``."""
        bound_sym: Optional[float] = None
        bound_shifted: Optional[float] = None
        if kappa != 1.0:
            return bound_sym, bound_shifted
        if case == "real_spectrum":
            # diagonal A (r_a = 0) and tridiagonal Q (r_q = 1): t = 2
            h = min((l - 1) // 2, h_max)
            bound_sym = decay_bound_sym(h, SPECTRUM, 1.0, 0, 1).value
        elif case == "kappa_shifted":
            # unitary Hessenberg A has quasiseparable order 1: t = 6
            h = min((l - 1) // 6, h_max)
            bound_shifted = decay_bound_shifted(h, SHIFTED_RANGE, 1.0, 1, 1).value
        return bound_sym, bound_shifted


async def setup(suite):
    await suite.add_experiment(DecayExperiment(suite))
