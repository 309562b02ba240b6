import logging
from typing import Any, Dict, List

from experiments.base import ControlExperiment, RowTask
from sdre.feedback import SOLVERS, FeedbackSolver, IntegratorOptions
from sdre.models import AllenCahnModel
from solvers.tink import TinkOptions
from utils.config import ExperimentConfig
from utils.errors import ConfigError, SizeCapError

logger = logging.getLogger(__name__)

ALLEN_CAHN_MAX_N = 2000


class AllenCahnExperiment(ControlExperiment):
    """SDRE control of the Allen-Cahn equation started from sin(πx).

    One row per (size, solver) with the cost per control, the mean bandwidth
    of the Riccati solutions and the total cost; with ``uncontrolled`` an
    open-loop run is added for reference.
    """

    name = "allen-cahn"
    config_name = "allen_cahn"

    def tasks(self, config: ExperimentConfig) -> List[RowTask]:
        solvers = config.get("solvers")
        unknown = [s for s in solvers if s not in SOLVERS]
        if unknown:
            raise ConfigError(f"unknown SDRE solvers: {', '.join(unknown)}")
        tasks = []
        for seed in config.seeds:
            for n in config.sizes:
                for solver in solvers:
                    tasks.append(RowTask(f"n={n}/{solver}/seed={seed}",
                                         self._runner(config, seed, n, solver, True)))
                if config.get("uncontrolled"):
                    tasks.append(RowTask(f"n={n}/uncontrolled/seed={seed}",
                                         self._runner(config, seed, n, "dense", False)))
        return tasks

    def _runner(self, config, seed, n, solver, controlled):
        def run() -> List[Dict[str, Any]]:
            return [self.control_row(config, seed, n, solver, controlled)]
        return run

    def model(self, config: ExperimentConfig, n: int) -> AllenCahnModel:
        if n > ALLEN_CAHN_MAX_N:
            raise SizeCapError(f"allen-cahn is limited to n <= {ALLEN_CAHN_MAX_N}, got {n}")
        return AllenCahnModel(n, config.get("L"), config.get("sigma"), config.get("gamma_tilde"))

    @staticmethod
    def feedback_solver(config: ExperimentConfig, seed: int, solver: str) -> FeedbackSolver:
        tink_opts = TinkOptions(tol=config.get("tol"), probes=config.get("probes"), seed=seed)
        return FeedbackSolver(solver, tink_opts=tink_opts)

    def control_row(self, config: ExperimentConfig, seed: int, n: int, solver: str,
                    controlled: bool = True) -> Dict[str, Any]:
        model = self.model(config, n)
        opts = IntegratorOptions("imex", dt=config.get("dt"))
        variant = "controlled" if controlled else "uncontrolled"
        _, row = self.simulate(config, seed, model, model.initial_state(),
                               self.feedback_solver(config, seed, solver), variant, opts, controlled)
        logger.info(f"allen-cahn n={n} {row['solver']}: cost={row['total_cost']:.8g} "
                    f"final={row['final_sup_norm']:.2e}")
        return row


async def setup(suite):
    await suite.add_experiment(AllenCahnExperiment(suite))
