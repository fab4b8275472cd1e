import numpy as np
import pytest

from specflow.profiles import build_binding_profile, build_dehn_profile


@pytest.fixture(scope="session")
def binding():
    return build_binding_profile()


@pytest.fixture(scope="session")
def dehn():
    return build_dehn_profile()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
