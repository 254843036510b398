import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cuboidpose.geometry import CameraIntrinsics, CuboidModel

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG = os.path.join(ROOT, "configs", "default.json")


@pytest.fixture
def K500():
    """fx = fy = 500 camera on a 640x480 image."""
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


@pytest.fixture
def unit_cube():
    return CuboidModel("cube", [1.0, 1.0, 1.0])


@pytest.fixture
def box():
    return CuboidModel("cracker_box", [0.16, 0.213, 0.06])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def config_path():
    return CONFIG


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, collected by tests/test_acceptance.py
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
