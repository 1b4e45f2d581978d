"""PSNR, SSIM and multi-scale SSIM on 8-bit rasters.

Inputs are ``(H, W)`` grayscale or ``(H, W, 3)`` colour arrays with values
in [0, 255].  SSIM and MS-SSIM convert colour input to luma first.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import ImageTooSmall, ShapeError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5


def _as_float(img) -> np.ndarray:
    return np.asarray(img, dtype=np.float64)


def _check_pair(pred, ref) -> Tuple[np.ndarray, np.ndarray]:
    pred, ref = _as_float(pred), _as_float(ref)
    if pred.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    return pred, ref


def to_luma(img) -> np.ndarray:
    img = _as_float(img)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[..., 0]
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ np.array(LUMA_WEIGHTS)
    raise ShapeError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")


def psnr(pred, ref, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio over all channels jointly; ``inf`` when equal."""
    pred, ref = _check_pair(pred, ref)
    mse = np.mean((pred - ref) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak ** 2 / mse))


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian; the 2-D window is its outer product."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    half = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[half:img.shape[0] - half, half:img.shape[1] - half]


def ssim_maps(x: np.ndarray, y: np.ndarray, peak: float = 255.0, k1: float = 0.01, k2: float = 0.03,
              window: np.ndarray = None) -> Tuple[np.ndarray, np.ndarray]:
    """Local SSIM and contrast-structure maps over 'valid' window positions."""
    g = gaussian_window() if window is None else window
    if min(x.shape) < len(g):
        raise ImageTooSmall(f"image {x.shape} smaller than the {len(g)}x{len(g)} window")
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    mu_x, mu_y = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x ** 2
    syy = _filter_valid(y * y, g) - mu_y ** 2
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    return lum * cs, cs


def ssim(pred, ref, peak: float = 255.0, k1: float = 0.01, k2: float = 0.03) -> float:
    pred, ref = _check_pair(pred, ref)
    s, _ = ssim_maps(to_luma(pred), to_luma(ref), peak, k1, k2)
    return float(s.mean())


def downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 box filter (symmetric extension at the far edge), keep every other sample."""
    padded = np.pad(img, ((0, 1), (0, 1)), mode="symmetric")
    box = (padded[:-1, :-1] + padded[1:, :-1] + padded[:-1, 1:] + padded[1:, 1:]) / 4.0
    return box[::2, ::2]


def mssim_levels(shape: Sequence[int], levels: int = 5) -> int:
    """Largest level count <= ``levels`` whose coarsest scale still fits the window."""
    n = min(shape[:2])
    usable = 0
    while usable < levels and n >= WINDOW_SIZE * 2 ** usable:
        usable += 1
    return usable


def mssim(pred, ref, levels: int = 5, weights: Sequence[float] = MSSSIM_WEIGHTS,
          peak: float = 255.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Multi-scale SSIM.

    Images too small for ``levels`` scales use fewer, with the leading
    weights renormalized to sum to one.  Per-scale values are clipped at 0
    before exponentiation so anti-correlated inputs cannot yield NaN.
    """
    pred, ref = _check_pair(pred, ref)
    x, y = to_luma(pred), to_luma(ref)
    used = mssim_levels(x.shape, levels)
    if used < 1:
        raise ImageTooSmall(f"image {x.shape} smaller than the {WINDOW_SIZE}x{WINDOW_SIZE} window")
    w = np.asarray(weights[:used], dtype=np.float64)
    w = w / w.sum()
    result = 1.0
    for level in range(used):
        s, cs = ssim_maps(x, y, peak, k1, k2)
        value = s.mean() if level == used - 1 else cs.mean()
        result *= max(value, 0.0) ** w[level]
        if level < used - 1:
            x, y = downsample2(x), downsample2(y)
    return float(result)
