import os

import numpy as np
import pytest

from mmnlse import presets


def pytest_collection_modifyitems(config, items):
    if os.environ.get("MMNLSE_FULL_SCALE") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; set MMNLSE_FULL_SCALE=1")
    for item in items:
        if "full_scale" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def linear3():
    return presets.canonical_fiber(100.0, 3, nonlinear=False)


@pytest.fixture
def pulse3():
    return presets.canonical_pulse(10.0, 3)
