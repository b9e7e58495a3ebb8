import numpy as np
import pytest

from hermite_nodal import config
from hermite_nodal.hermite_core import ModelParams


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_direction(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(config.MC_SEED)


@pytest.fixture
def params_2d():
    """d=2, E=1, N=10: small enough for every exact sum to be instant."""
    return ModelParams(d=2, E=1.0, N=10)
