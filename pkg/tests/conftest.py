import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iclust import DataSet, MvHyperParams
from iclust.io import read_csv, standardize

GALAXY_CSV = Path(__file__).parent.parent / "src" / "iclust" / "data" / "galaxy.csv"


@pytest.fixture(scope="session")
def galaxy_path():
    return GALAXY_CSV


@pytest.fixture(scope="session")
def galaxy_standardized():
    data, _, _ = standardize(read_csv(GALAXY_CSV))
    return data


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data(rng):
    return DataSet(rng.standard_normal((12, 2)))


@pytest.fixture
def mv_params():
    return MvHyperParams(alpha=4.0, tau=1.0, mu=np.zeros(2), nu=3.0, omega=1.0)
