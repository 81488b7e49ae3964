import numpy as np
import pytest

from credfilter.fullinfo import ClaimSpec, solve_fullinfo
from credfilter.galerkin import assemble_matrices, build_basis
from credfilter.model import ModelParams, law_from_params


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def law(params):
    return law_from_params(params)


@pytest.fixture(scope="session")
def basis(params):
    return build_basis(params.K, params.N, 48)


@pytest.fixture(scope="session")
def mats(basis, params):
    return assemble_matrices(basis, params)


@pytest.fixture(scope="session")
def grids(params, law):
    """Full-information grids of the standard instruments."""
    out = {
        "survival_1": solve_fullinfo(ClaimSpec.survival(1.0), params, 100, 400, law),
        "survival_2": solve_fullinfo(ClaimSpec.survival(2.0), params, 100, 400, law),
        "survival_3": solve_fullinfo(ClaimSpec.survival(3.0), params, 120, 400, law),
        "default_2": solve_fullinfo(ClaimSpec.default(2.0), params, 100, 400, law),
        "default_5": solve_fullinfo(ClaimSpec.default(5.0), params, 200, 400, law),
        "stock": solve_fullinfo(ClaimSpec.stock(), params, 200, 400, law),
    }
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
