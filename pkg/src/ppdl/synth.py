"""Procedurally generated textured-image classification dataset.

Each class is a spatial texture family drawn with three random intensity
levels per image (at least 40 apart), a random period and phase, plus
impulse noise:

    0 horizontal stripes   1 vertical stripes
    2 checkerboard         3 concentric rings

Used as a desk-scale stand-in for a real radiography corpus.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import ImageTensor, write_image

CLASS_NAMES = ("horizontal", "vertical", "checker", "rings")


def _draw_levels(rng, count: int = 3, min_gap: int = 40) -> np.ndarray:
    while True:
        levels = rng.integers(0, 256, size=count)
        if np.diff(np.sort(levels)).min() >= min_gap:
            return levels.astype(np.uint8)


def render(kind: int, size: int, rng: np.random.Generator, noise: float = 0.05) -> np.ndarray:
    period = rng.uniform(6.0, 14.0)
    phase = rng.uniform(0.0, period)
    levels = _draw_levels(rng)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    band = period / 2
    if kind == 0:
        idx = (yy + phase) // band % 3
    elif kind == 1:
        idx = (xx + phase) // band % 3
    elif kind == 2:
        idx = (yy + phase) // band % 2 + (xx + phase) // band % 2
    elif kind == 3:
        cy, cx = rng.uniform(0.25 * size, 0.75 * size, size=2)
        idx = (np.hypot(yy - cy, xx - cx) + phase) // band % 3
    else:
        raise ValueError(f"unknown texture kind {kind}")
    img = levels[idx.astype(np.intp)]
    # impulse noise: a random fraction of pixels takes uniformly random values
    hit = rng.random((size, size)) < noise
    img[hit] = rng.integers(0, 256, size=int(hit.sum()))
    return img


def generate(per_class: int, size: int = 64, seed: int = 0, noise: float = 0.05):
    """Return ``(images, labels)`` as a ``(N, size, size)`` uint8 array and int labels.

    Images are ordered class by class.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    images, labels = [], []
    for k in range(len(CLASS_NAMES)):
        for _ in range(per_class):
            images.append(render(k, size, rng, noise))
            labels.append(k)
    return np.stack(images), np.asarray(labels)


def write_dataset(root, per_class: int, size: int = 64, seed: int = 0, noise: float = 0.05) -> Path:
    """Write the dataset as ``root/<class>/<index>.png``."""
    root = Path(root)
    images, labels = generate(per_class, size, seed, noise)
    counters = [0] * len(CLASS_NAMES)
    for img, k in zip(images, labels):
        d = root / CLASS_NAMES[k]
        d.mkdir(parents=True, exist_ok=True)
        write_image(ImageTensor(img), d / f"{counters[k]:05d}.png")
        counters[k] += 1
    return root
