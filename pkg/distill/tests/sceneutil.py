import numpy as np


def paint_scene(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """A textured scene: tinted background plus a few solid rectangles."""
    base = rng.integers(40, 216, size=3)
    img = np.full((size, size, 3), base, dtype=np.uint8)
    img = (img + rng.normal(0, 8, img.shape)).clip(0, 255).astype(np.uint8)
    for _ in range(rng.integers(1, 4)):
        y, x = rng.integers(0, size - 8, size=2)
        h, w = rng.integers(6, 20, size=2)
        color = rng.integers(0, 256, size=3).tolist()
        img[y : y + h, x : x + w] = color
    return img
