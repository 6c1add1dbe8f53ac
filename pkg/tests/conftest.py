import numpy as np
import pytest

from hecnet import fv
from hecnet.params_io import load_bundled


@pytest.fixture(scope="session")
def tiny_pf():
    return load_bundled("tiny")


@pytest.fixture(scope="session")
def tiny_keys(tiny_pf):
    return fv.keygen(tiny_pf.params, seed=42)


@pytest.fixture(scope="session")
def default_pf():
    return load_bundled("default")


@pytest.fixture(scope="session")
def default_keys(default_pf):
    return fv.keygen(default_pf.params, seed=42)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
