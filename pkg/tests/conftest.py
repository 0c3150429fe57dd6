from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow benchmark checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_spd(p, rng, floor=0.5):
    """B B' / p + floor * I for a standard normal B."""
    b = rng.standard_normal((p, p))
    return b @ b.T / p + floor * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def ehr_dir():
    return FIXTURES / "ehr"
