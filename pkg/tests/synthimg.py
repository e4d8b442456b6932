"""Synthetic natural-like test images.

Smooth multi-scale backgrounds with a few soft shapes. Every image is
standardized to the same per-channel mean and contrast so that networks
with normalization layers (which discard global statistics) can be trained
to desk-scale quality within a small step budget.
"""

import numpy as np
from PIL import Image

TARGET_MEAN = 0.5
TARGET_STD = 0.13


def _upsample(field: np.ndarray, size: int) -> np.ndarray:
    chans = [
        np.asarray(
            Image.fromarray((c * 255).astype(np.uint8)).resize(
                (size, size), Image.BICUBIC
            ),
            dtype=np.float32,
        )
        / 255.0
        for c in field
    ]
    return np.stack(chans)


def synth_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    img = np.zeros((3, size, size), dtype=np.float32)
    for scale, weight in ((3, 0.55), (6, 0.3), (12, 0.15)):
        img += weight * _upsample(rng.random((3, scale, scale)).astype(np.float32), size)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    for _ in range(int(rng.integers(2, 5))):
        cx, cy = rng.random(2) * size
        rx, ry = (0.08 + 0.25 * rng.random(2)) * size
        d = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
        soft = 1.0 / (1.0 + np.exp(np.clip(8.0 * (d - 1.0), -30.0, 30.0)))
        color = rng.random(3).astype(np.float32)
        alpha = 0.25 + 0.4 * rng.random()
        img = img * (1 - alpha * soft) + color[:, None, None] * (alpha * soft)

    # fix the global statistics: per-channel mean and contrast
    mu = img.mean(axis=(1, 2), keepdims=True)
    sd = img.std(axis=(1, 2), keepdims=True)
    img = TARGET_MEAN + (img - mu) / np.maximum(sd, 1e-4) * TARGET_STD
    return np.clip(img, 0.02, 0.98).astype(np.float32)


def synth_corpus(directory, count: int, size: int, seed: int) -> list:
    """Write `count` PNG images into directory; returns their paths."""
    from stegofill.datapipe import save_image

    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        p = directory / f"synth_{i:04d}.png"
        save_image(p, synth_image(rng, size))
        paths.append(p)
    return paths
