import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make tests/oracles.py importable

import toklink
from toklink.framing import FramingConfig
from toklink.polar import PolarConfig

FIXTURES = Path(toklink.__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def framing_cfg():
    return FramingConfig()


@pytest.fixture
def polar_cfg():
    return PolarConfig()
