import os

# single-threaded BLAS before numpy loads: the suite runs many small dense
# operations where thread sync dominates
for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from elaml import CrnDraws, ParamVec, build_model
from elaml.designs import cluster_design, one_way_design, salamander_design


@pytest.fixture(scope="session")
def normal_model():
    """Balanced one-way normal mixed model with simulated responses."""
    template = build_model("normal_lmm", one_way_design(8, 4))
    truth = ParamVec.from_natural(template.layout, [0.5], [1.1, 0.9])
    rng = np.random.default_rng(2024)
    return build_model("normal_lmm", template.simulate_response(truth, rng))


@pytest.fixture(scope="session")
def toy_model():
    """Single-cluster Bernoulli toy with the fixed response pattern."""
    y = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    return build_model("bernoulli_cluster_toy", cluster_design(5).with_responses(y))


@pytest.fixture(scope="session")
def summer_model():
    """Summer crossed binary model on a simulated dataset at the table truth."""
    template = build_model("summer_glmm", salamander_design())
    truth = ParamVec.from_natural(
        template.layout, [1.06, -3.05, -0.72, 3.77], [1.22, 1.22]
    )
    rng = np.random.default_rng(7)
    return build_model("summer_glmm", template.simulate_response(truth, rng))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_theta(toy_model):
    return ParamVec.from_natural(toy_model.layout, [0.5], [1.0])


@pytest.fixture(scope="session")
def crn_factory():
    return CrnDraws.from_seed
