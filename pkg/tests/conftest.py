from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from propsel.imaging import Image


def textured_image(width: int, height: int, seed: int = 0, smooth: float = 1.5) -> Image:
    """Random texture with enough structure for flow/descriptor tests."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    arr = ndimage.gaussian_filter(rng.random((height, width)), smooth)
    arr = (arr - arr.min()) / max(arr.max() - arr.min(), 1e-12)
    return Image(arr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
