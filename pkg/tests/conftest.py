import numpy as np
import pytest

from edubart.features import build_features
from edubart.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def small_dataset():
    """300 students / 20 schools; big enough to exercise every column."""
    entities, truth = generate(SynthConfig(n_students=300, n_schools=20, seed=101))
    return entities, truth


@pytest.fixture(scope="session")
def small_features(small_dataset):
    entities, _ = small_dataset
    return build_features(entities, 5)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
