"""Matrix formats and dense kernels."""
from linalg.banded import BandedMatrix, band_truncate, lambda_min_banded
from linalg.dense import (
    CareProblem,
    SolveReport,
    care_closed_form_sym,
    dense_care,
    riccati_residual,
    sol_norm_bound,
    sqrtm_spd,
    sym_eig,
)
from linalg.hmatrix import (
    HMatrix,
    hm_add,
    hm_from_banded,
    hm_from_dense,
    hm_lowrank_update,
    hm_matmul,
    hm_matvec,
    hm_recompress,
    hm_solve,
    hm_split,
)
from linalg.lowrank import LowRankFactor, lowrank_recompress

__all__ = [
    "BandedMatrix", "band_truncate", "lambda_min_banded",
    "CareProblem", "SolveReport", "care_closed_form_sym", "dense_care",
    "riccati_residual", "sol_norm_bound", "sqrtm_spd", "sym_eig",
    "HMatrix", "hm_add", "hm_from_banded", "hm_from_dense", "hm_lowrank_update",
    "hm_matmul", "hm_matvec", "hm_recompress", "hm_solve", "hm_split",
    "LowRankFactor", "lowrank_recompress",
]
