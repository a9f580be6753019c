import numpy as np
import pytest

from daeblock.cli import read_model_text
from daeblock.modelfile import parse_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def model():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = parse_model(read_model_text(name))
        return cache[name]

    return get
