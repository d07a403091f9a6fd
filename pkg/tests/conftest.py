import numpy as np
import pytest

from perturbop import stern as st
from perturbop import thue_morse as tm


@pytest.fixture(scope="session")
def tm8():
    return tm.build_tm_profile(8)


@pytest.fixture(scope="session")
def stern8():
    return st.build_stern_profile(8)


@pytest.fixture(scope="session")
def app_systems(tm8, stern8):
    return {"thue-morse": tm8, "stern": stern8}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
