import logging
from typing import Any, Dict, List

from experiments.base import ControlExperiment, RowTask, row_rng
from sdre.feedback import SOLVERS, FeedbackSolver, IntegratorOptions
from sdre.models import CuckerSmaleModel
from solvers.dac import DacOptions
from utils.config import ExperimentConfig
from utils.errors import ConfigError, SizeCapError

logger = logging.getLogger(__name__)

CUCKER_SMALE_MAX_AGENTS = 2000
ORDERINGS = ("sorted", "unsorted")


class CuckerSmaleExperiment(ControlExperiment):
    """SDRE flocking control; ``sizes`` are agent counts.

    Every run with the same seed and size starts from the same uniform draw,
    so sorted and unsorted orderings differ only in the offdiagonal ranks the
    hierarchical solver sees.
    """

    name = "cucker-smale"
    config_name = "cucker_smale"

    def tasks(self, config: ExperimentConfig) -> List[RowTask]:
        solvers = config.get("solvers")
        orderings = config.get("orderings")
        if any(s not in SOLVERS for s in solvers):
            raise ConfigError(f"solvers must be drawn from {SOLVERS}")
        if any(o not in ORDERINGS for o in orderings):
            raise ConfigError(f"orderings must be drawn from {ORDERINGS}")
        tasks = []
        for seed in config.seeds:
            for agents in config.sizes:
                for solver in solvers:
                    for ordering in orderings:
                        tasks.append(RowTask(
                            f"agents={agents}/{solver}/{ordering}/seed={seed}",
                            self._runner(config, seed, agents, solver, ordering, True),
                        ))
                if config.get("uncontrolled"):
                    tasks.append(RowTask(f"agents={agents}/uncontrolled/seed={seed}",
                                         self._runner(config, seed, agents, "dense", "sorted", False)))
        return tasks

    def _runner(self, config, seed, agents, solver, ordering, controlled):
        def run() -> List[Dict[str, Any]]:
            return [self.control_row(config, seed, agents, solver, ordering, controlled)]
        return run

    def model(self, config: ExperimentConfig, agents: int, ordering: str) -> CuckerSmaleModel:
        if agents > CUCKER_SMALE_MAX_AGENTS:
            raise SizeCapError(f"cucker-smale is limited to {CUCKER_SMALE_MAX_AGENTS} agents, got {agents}")
        return CuckerSmaleModel(agents, sort=ordering == "sorted", n_min=config.get("n_min"),
                                compression_tol=config.get("compression_tol"))

    @staticmethod
    def feedback_solver(config: ExperimentConfig, solver: str) -> FeedbackSolver:
        dac_opts = DacOptions(n_min=config.get("n_min"), compression_tol=config.get("compression_tol"),
                              eksm_tol=config.get("eksm_tol"), compute_residual=False)
        return FeedbackSolver(solver, dac_opts=dac_opts)

    def control_row(self, config: ExperimentConfig, seed: int, agents: int, solver: str,
                    ordering: str, controlled: bool = True) -> Dict[str, Any]:
        model = self.model(config, agents, ordering)
        y0 = model.initial_state(row_rng(seed, agents))
        opts = IntegratorOptions("rk45", dt=config.get("dt"), rtol=config.get("rtol"),
                                 atol=config.get("atol"))
        variant = ordering if controlled else "uncontrolled"
        _, row = self.simulate(config, seed, model, y0, self.feedback_solver(config, solver),
                               variant, opts, controlled)
        logger.info(f"cucker-smale agents={agents} {row['solver']} {variant}: "
                    f"rank={row['mean_structure']} final={row['final_sup_norm']:.2e}")
        return row


async def setup(suite):
    await suite.add_experiment(CuckerSmaleExperiment(suite))
