import cv2
import numpy as np
import pytest

from sceneutil import paint_scene


@pytest.fixture
def image_dir(tmp_path):
    rng = np.random.default_rng(7)
    d = tmp_path / "images"
    d.mkdir()
    for i in range(12):
        cv2.imwrite(str(d / f"img_{i:03d}.png"), paint_scene(rng)[:, :, ::-1])
    return d
