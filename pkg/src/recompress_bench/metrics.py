"""Full-reference quality metrics.

All metrics crop padded images back to their original dimensions before
comparing, so codec padding never contaminates a score.  MSE and PSNR run
over every sample of every plane; SSIM runs on luma only, with an 11x11
Gaussian window (sigma 1.5) and only windows that fit entirely inside the
image, matching the original single-scale definition for a [0, 1] dynamic
range.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

from .pixelcore import Colorspace, PlanarImage, rgb_to_ycbcr420

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

_HIGHER_IS_BETTER = {"psnr": True, "ssim": True, "mse": False}


def higher_is_better(name: str) -> bool:
    """Orientation of a metric by name; unknown (external) metrics are
    treated as lower-is-better, the LPIPS convention."""
    return _HIGHER_IS_BETTER.get(name.lower(), False)


def _check_pair(a: PlanarImage, b: PlanarImage) -> None:
    if a.colorspace is not b.colorspace:
        raise ValueError(
            f"colorspace mismatch: {a.colorspace.value} vs {b.colorspace.value}"
        )
    if (a.width, a.height) != (b.width, b.height) or (
        a.orig_width, a.orig_height
    ) != (b.orig_width, b.orig_height):
        raise ValueError("dimension mismatch between images")


def mse(a: PlanarImage, b: PlanarImage) -> float:
    """Mean squared error over all pixels and channels of the original crop."""
    _check_pair(a, b)
    num = 0.0
    den = 0
    for pa, pb in zip(a.cropped_planes(), b.cropped_planes()):
        d = pa - pb
        num += float((d * d).sum())
        den += d.size
    return num / den


def psnr(a: PlanarImage, b: PlanarImage) -> float:
    """Peak signal-to-noise ratio in dB for unit peak; +inf for identical input."""
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return 10.0 * math.log10(1.0 / m)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _luma(img: PlanarImage) -> np.ndarray:
    if img.colorspace is Colorspace.YCBCR420:
        return img.cropped_planes()[0]
    return rgb_to_ycbcr420(img).cropped_planes()[0]


def ssim(a: PlanarImage, b: PlanarImage) -> float:
    """Mean structural similarity over luma, valid windows only."""
    _check_pair(a, b)
    x = _luma(a)
    y = _luma(b)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image too small for SSIM: needs at least "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} luma, got {x.shape[1]}x{x.shape[0]}"
        )
    w = _gaussian_window()
    c1 = SSIM_K1 * SSIM_K1
    c2 = SSIM_K2 * SSIM_K2
    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    xx = convolve2d(x * x, w, mode="valid") - mu_x * mu_x
    yy = convolve2d(y * y, w, mode="valid") - mu_y * mu_y
    xy = convolve2d(x * y, w, mode="valid") - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float((num / den).mean())
