"""
Shared fixtures. The library modules import each other from ``src`` as the
top level, the same way run.py sets up the path.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT))

from config import ModelConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """Desk-scale model: 32 channels, 12 objects, 3 classes."""
    return ModelConfig(c_in=32, n_objects=12, c_out=64, num_classes=3, seed=3)
