import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tinyssd.arch import tiny_ssd_spec
from tinyssd.modelio import init_random
from tinyssd.network import forward
from tinyssd.priors import generate_priors, tiny_ssd_prior_config
from tinyssd.tensor import Tensor


@pytest.fixture(scope="session")
def spec():
    return tiny_ssd_spec()


@pytest.fixture(scope="session")
def store(spec):
    return init_random(spec, 11)


@pytest.fixture(scope="session")
def prior_set(spec):
    return generate_priors(tiny_ssd_prior_config(spec))


@pytest.fixture(scope="session")
def test_image():
    rng = np.random.default_rng(3)
    return Tensor(rng.normal(0.0, 1.0, (1, 3, 300, 300)).astype(np.float32))


@pytest.fixture(scope="session")
def head(spec, store, test_image):
    return forward(spec, store, test_image)
