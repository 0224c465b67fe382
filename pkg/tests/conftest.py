"""Shared fixtures; the repository root goes on sys.path (the project is not installed)."""

import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

import numpy as np
import pytest

from src.data.images import ImageTensor
from src.data.synthetic import make_texture_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gradient_frame():
    """256x256 gray frame whose sample at (y, x) is (x + 2y) mod 256."""
    y, x = np.mgrid[0:256, 0:256]
    return ImageTensor.from_array(((x + 2 * y) % 256).astype(np.uint8))


@pytest.fixture
def noise_frame(rng):
    return ImageTensor.from_array(rng.integers(0, 256, size=(256, 256, 3), dtype=np.uint8))


@pytest.fixture(scope="session")
def small_textures():
    """3 classes x 8 images, 4 train / 4 test per class."""
    return make_texture_dataset(per_class=8, seed=7)
