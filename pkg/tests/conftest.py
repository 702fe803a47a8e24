import numpy as np
import pytest

from qplab.contfrac import expand
from qplab.udspace import Modulus


@pytest.fixture(scope="session")
def golden_cf():
    return expand("golden", 40)


@pytest.fixture(scope="session")
def moduli():
    return [Modulus("analytic"), Modulus("gevrey", 0.7), Modulus("power", 3.0)]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_real_series(rng, K, amp=1.0, decay=1.0):
    from qplab.udspace import FourierSeries

    c = rng.normal(size=2 * K + 1) * np.exp(-decay * np.abs(np.arange(-K, K + 1))) + 0j
    return FourierSeries(amp * (c + np.conj(c[::-1])) / 2.0, True)
