import numpy as np
import pytest

from grlimits.corpus import CorpusGeometry
from grlimits.relevance import uniform_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_geom():
    return CorpusGeometry(4, 3)


@pytest.fixture
def small_uniform(small_geom):
    return uniform_model(small_geom)
