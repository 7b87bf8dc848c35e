import math

import numpy as np
import pytest

ELL = 2.0 * math.pi


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def ell():
    return ELL
