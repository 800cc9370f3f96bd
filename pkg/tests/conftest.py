import numpy as np
import pytest

from oldroyd_isvd.fespace import build_mini_space
from oldroyd_isvd.mesh import DomainSpec, build_mesh


@pytest.fixture(scope="session")
def square4():
    return build_mini_space(build_mesh(DomainSpec.unit_square(4)))


@pytest.fixture(scope="session")
def square8():
    return build_mini_space(build_mesh(DomainSpec.unit_square(8)))


@pytest.fixture(scope="session")
def contraction_space():
    return build_mini_space(build_mesh(DomainSpec.contraction(corner_refine_levels=1, cell_size=0.5)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
