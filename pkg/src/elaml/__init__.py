"""Exact ML and REML for latent Gaussian models.

Point estimation maximizes a Monte Carlo corrected Laplace objective built
from importance-weighted draws of the Gaussian predictive distribution;
matching weighted-draw information matrices give consistent standard errors.
"""

__version__ = "0.1.0"

import os as _os

# The linear algebra here is many small dense operations; BLAS thread
# synchronization costs more than it saves at these sizes. Respect explicit
# user settings, default to single-threaded kernels otherwise. Worker-level
# parallelism is controlled separately (ELA_ML_THREADS).
for _var in (
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "OMP_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    _os.environ.setdefault(_var, "1")

from .datasets import Dataset, pairwise_distances
from .ela import (
    CrnDraws,
    ElaEstimate,
    InformationResult,
    ela_information,
    ela_marginal,
    ela_reml_information,
    ela_restricted,
    elbo_estimate,
    sample_predictive,
)
from .errors import (
    DataError,
    ElamlError,
    EstimateError,
    FitError,
    ModeError,
    ModelError,
    StudyError,
)
from .fitting import (
    DeltaMap,
    FitOptions,
    FitResult,
    delta_transform,
    fit_ml,
    fit_reml,
    lrt,
    matern_extension,
)
from .laplace import (
    gaussian_predictive_logpdf,
    la_marginal,
    la_restricted,
)
from .models import FAMILIES, build_model, exp_covariance
from .modes import ModeResult, joint_mode, latent_mode
from .params import ParamLayout, ParamVec, to_natural, to_unconstrained
from .study import StudyConfig, StudyResult, SummaryTable, run_study, summarize

__all__ = [
    "CrnDraws",
    "DataError",
    "Dataset",
    "DeltaMap",
    "ElaEstimate",
    "ElamlError",
    "EstimateError",
    "FAMILIES",
    "FitError",
    "FitOptions",
    "FitResult",
    "InformationResult",
    "ModeError",
    "ModeResult",
    "ModelError",
    "ParamLayout",
    "ParamVec",
    "StudyConfig",
    "StudyError",
    "StudyResult",
    "SummaryTable",
    "build_model",
    "delta_transform",
    "ela_information",
    "ela_marginal",
    "ela_reml_information",
    "ela_restricted",
    "elbo_estimate",
    "exp_covariance",
    "fit_ml",
    "fit_reml",
    "gaussian_predictive_logpdf",
    "joint_mode",
    "la_marginal",
    "la_restricted",
    "latent_mode",
    "lrt",
    "matern_extension",
    "pairwise_distances",
    "run_study",
    "sample_predictive",
    "summarize",
    "to_natural",
    "to_unconstrained",
]
