import math

import numpy as np
import pytest

from cellseff import PathModel, mimo_curve, siso_exact_curve
from cellseff.seff import MimoConfig


@pytest.fixture(scope="session")
def m4():
    return PathModel(4.0)


@pytest.fixture(scope="session")
def m38():
    return PathModel(3.8)


@pytest.fixture(scope="session")
def siso_curve():
    return siso_exact_curve()


@pytest.fixture(scope="session")
def curve_2x2():
    return mimo_curve(MimoConfig(2, 2))


def normal_cdf(x, mu, sigma2):
    z = (np.asarray(x) - mu) / math.sqrt(2.0 * sigma2)
    return 0.5 * (1.0 + np.vectorize(math.erf)(z))
