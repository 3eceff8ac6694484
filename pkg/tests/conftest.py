import numpy as np
import pytest

from nlfp.quadrature import QuadratureSpec


@pytest.fixture
def quad_spec():
    return QuadratureSpec()


@pytest.fixture
def fast_spec():
    return QuadratureSpec(panels_per_decade=2, rel_tol=1e-7, n_theta=32)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
