"""Shared synthetic-image helpers.

All corpora are seeded and deterministic; tests freeze expected values
against these exact recipes.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from recompress_bench.pixelcore import PlanarImage, from_rgb_array, rgb_to_ycbcr420


def smooth_gray(seed: int, size: int = 64, structured: bool = True) -> np.ndarray:
    """Smoothed uniform noise in [0, 1]; optionally with hard-edged patches."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 1.0, (size, size))
    out = gaussian_filter(base, sigma=size / 16.0)
    out = (out - out.min()) / (out.max() - out.min() + 1e-12)
    if structured:
        for _ in range(4):
            x0, y0 = rng.integers(0, size - 6, 2)
            w, h = rng.integers(4, size // 3, 2)
            out[y0:y0 + h, x0:x0 + w] = np.clip(
                out[y0:y0 + h, x0:x0 + w] * 0.3 + float(rng.uniform(0, 1)) * 0.7, 0, 1
            )
    return np.clip(out, 0.0, 1.0)


def smooth_rgb(seed: int, size: int = 64) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 1.0, (size, size, 3))
    out = np.stack(
        [gaussian_filter(base[:, :, c], sigma=size / 16.0) for c in range(3)], axis=-1
    )
    out = (out - out.min()) / (out.max() - out.min() + 1e-12)
    for _ in range(4):
        x0, y0 = rng.integers(0, size - 6, 2)
        w, h = rng.integers(4, size // 3, 2)
        out[y0:y0 + h, x0:x0 + w] = rng.uniform(0, 1, 3)
    return out


def gray_image(seed: int, size: int = 64) -> PlanarImage:
    return from_rgb_array(smooth_gray(seed, size))


def rgb_image(seed: int, size: int = 64) -> PlanarImage:
    return from_rgb_array(smooth_rgb(seed, size))


def ycc_image(seed: int, size: int = 64) -> PlanarImage:
    return rgb_to_ycbcr420(rgb_image(seed, size))


def restoration_corpus(
    seed: int = 2024, count: int = 10, size: int = 96, noise: float = 0.03
) -> list[tuple[str, PlanarImage, PlanarImage]]:
    """(image_id, clean, noisy) triples: smooth scenes plus additive noise.

    Half the images carry structured rectangles so content varies in how much
    detail the rate budget can afford.
    """
    rng = np.random.default_rng(seed)
    triples = []
    for i in range(count):
        base = rng.uniform(0.0, 1.0, (size, size))
        sm = gaussian_filter(base, sigma=3.0 + (i % 4))
        sm = (sm - sm.min()) / (sm.max() - sm.min() + 1e-12)
        if i % 2:
            for _ in range(4):
                x0, y0 = rng.integers(0, size - 8, 2)
                w, h = rng.integers(6, size // 3, 2)
                sm[y0:y0 + h, x0:x0 + w] = np.clip(
                    sm[y0:y0 + h, x0:x0 + w] * 0.3 + float(rng.uniform(0, 1)) * 0.7,
                    0, 1,
                )
        clean = np.clip(sm, 0.0, 1.0)
        noisy = np.clip(clean + rng.normal(0.0, noise, clean.shape), 0.0, 1.0)
        triples.append((f"img{i:02d}", from_rgb_array(clean), from_rgb_array(noisy)))
    return triples


@pytest.fixture(scope="session")
def ycc64() -> PlanarImage:
    return ycc_image(seed=7, size=64)


@pytest.fixture(scope="session")
def rgb64() -> PlanarImage:
    return rgb_image(seed=7, size=64)
