# tests/conftest.py
import math

import numpy as np
import pytest

from src.geometry.camera import intrinsics_from_fov
from src.oracle.raycast import raycast_maps
from src.oracle.scene import generate_scene
from src.utils.config import get_pipeline_config


@pytest.fixture(scope="session")
def test_cfg():
    """
    Pipeline config with the fast test overlay (64x64 oracle, small CSS rig).
    """
    return get_pipeline_config("config/config.test.yaml")


@pytest.fixture
def camera():
    return intrinsics_from_fov(math.radians(60.0), math.radians(45.0), 64, 48)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def oracle_scene(test_cfg):
    return generate_scene(test_cfg.oracle.objects, seed=3, settings=test_cfg.oracle)


@pytest.fixture(scope="session")
def oracle_output(oracle_scene, test_cfg):
    return raycast_maps(oracle_scene, test_cfg.oracle)
