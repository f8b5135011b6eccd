from __future__ import annotations

import numpy as np
import pytest

from uavsem.imageio import load_corpus

TEST_IMAGE = "02_chelsea"


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def test_image(corpus):
    return dict(corpus)[TEST_IMAGE]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
