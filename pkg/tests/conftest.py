import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from lpvred.core import AffineLpvModel, ParameterBox  # noqa: E402
from lpvred.generators import generate_random_model  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def toy_model(n=2, l=1, m=1, q=1, seed=0, scale=0.3):
    """Small random stable affine model on [0, 1]^l."""
    rng = np.random.default_rng(seed)
    A = np.empty((l + 1, n, n))
    M = rng.standard_normal((n, n))
    A[0] = -(M @ M.T + n * np.eye(n)) + 0.5 * (M - M.T)
    for i in range(1, l + 1):
        S = rng.standard_normal((n, n))
        A[i] = -scale * (S @ S.T + 0.1 * np.eye(n))
    B = rng.standard_normal((l + 1, n, m)) * np.r_[1.0, [scale] * l][:, None, None]
    C = rng.standard_normal((l + 1, q, n)) * np.r_[1.0, [scale] * l][:, None, None]
    D = rng.standard_normal((l + 1, q, m)) * 0.1
    return AffineLpvModel(A, B, C, D, ParameterBox(np.zeros(l), np.ones(l)))


@pytest.fixture
def small_model():
    return generate_random_model(3, n=6, l=3)


@pytest.fixture
def toy():
    return toy_model
