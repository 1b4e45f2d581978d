"""Noise quality measure.

Both images are split by a bank of six radial log-cosine filters into a
low-pass residual and five octave band-pass images.  Each band is turned
into a local contrast by dividing by the sum of everything coarser, the
test image's bands are masked where the two contrasts differ by less than
a contrast-dependent threshold, sub-threshold coefficients are zeroed, and
the band sums of the two "restored" images are compared as an SNR in dB.

Viewing geometry is fixed to the usual defaults: a viewing angle of
``1/3.5`` radians expressed in degrees, and octave centre frequencies of
2, 4, 8, 16 and 32 cycles per image.
"""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np

from ..errors import DegenerateInput, ImageTooSmall, ShapeError
from .quality import to_luma

VIEWING_ANGLE = (1.0 / 3.5) * (180.0 / math.pi)
BAND_FREQUENCIES = (2.0, 4.0, 8.0, 16.0, 32.0)
MIN_SIZE = 8  # the first band-pass filter spans radii 1..4

# (lo, hi, fill, phase): 0.5 * (1 + cos(pi * log2(arg) - phase)), with arg
# replaced by ``fill`` outside [lo, hi].  The low-pass filter uses arg = r + 2.
_FILTERS = (
    (1.0, 4.0, 4.0, math.pi),
    (1.0, 4.0, 4.0, math.pi),
    (2.0, 8.0, 0.5, 0.0),
    (4.0, 16.0, 4.0, math.pi),
    (8.0, 32.0, 0.5, 0.0),
    (16.0, 64.0, 4.0, math.pi),
)


def contrast_threshold(f):
    """Contrast detection threshold at spatial frequency ``f`` (cycles/degree)."""
    f = np.asarray(f, dtype=np.float64)
    return 1.0 / (200.0 * 2.6 * (0.0192 + 0.114 * f) * np.exp(-((0.114 * f) ** 1.1)))


def radial_frequency(shape: Tuple[int, int]) -> np.ndarray:
    """Distance from DC, in cycles per image, in unshifted FFT layout."""
    h, w = shape
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.fftfreq(w) * w
    return np.hypot(fy[:, None], fx[None, :])


def filter_bank(shape: Tuple[int, int]) -> List[np.ndarray]:
    r = radial_frequency(shape)
    bank = []
    for k, (lo, hi, fill, phase) in enumerate(_FILTERS):
        arg = r + 2.0 if k == 0 else r
        inside = (arg >= lo) & (arg <= hi)
        arg = np.where(inside, arg, fill)
        bank.append(0.5 * (1.0 + np.cos(math.pi * np.log2(arg) - phase)))
    return bank


def _split_bands(img: np.ndarray, bank: List[np.ndarray]) -> Tuple[np.ndarray, List[np.ndarray]]:
    spectrum = np.fft.fft2(img)
    parts = [np.real(np.fft.ifft2(g * spectrum)) for g in bank]
    return parts[0], parts[1:]


def _contrasts(low: np.ndarray, bands: List[np.ndarray]) -> List[np.ndarray]:
    out = []
    acc = low.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        for band in bands:
            out.append(band / acc)
            acc = acc + band
    return out


def nqm(pred, ref) -> float:
    """NQM of ``pred`` against the reference ``ref``, in dB.

    Returns ``inf`` when the restored images coincide.  Raises
    DegenerateInput when the reference has no band-pass energy (for example
    a constant image), where the ratio is undefined.
    """
    pred, ref = np.asarray(pred, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    ref, pred = to_luma(ref), to_luma(pred)
    if min(ref.shape) < MIN_SIZE:
        raise ImageTooSmall(f"NQM needs images of at least {MIN_SIZE}x{MIN_SIZE}, got {ref.shape}")

    bank = filter_bank(ref.shape)
    low, bands = _split_bands(ref, bank)
    low_i, bands_i = _split_bands(pred, bank)
    c = _contrasts(low, bands)
    ci = _contrasts(low_i, bands_i)
    detect = contrast_threshold(np.asarray(BAND_FREQUENCIES) / VIEWING_ANGLE)

    restored, restored_i = np.zeros_like(ref), np.zeros_like(ref)
    with np.errstate(invalid="ignore"):
        for k in range(len(bands)):
            # masking: where the test contrast is within threshold of the
            # reference contrast, take the reference coefficient
            ck, cik = c[k], np.where(np.abs(ci[k]) > 1.0, 1.0, ci[k])
            ct = contrast_threshold(k + 1)  # band index as frequency, per the published algorithm
            t = ct * (0.86 * (ck / ct - 1.0) + 0.3)
            a_i = np.where(np.abs(cik - ck) - t < 0, bands[k], bands_i[k])
            # detection: drop coefficients whose contrast is below threshold
            restored += np.where(np.abs(ck) < detect[k], 0.0, bands[k])
            restored_i += np.where(np.abs(ci[k]) < detect[k], 0.0, a_i)

    signal = float(np.sum(restored ** 2))
    noise = float(np.sum((restored - restored_i) ** 2))
    if signal == 0.0 or not math.isfinite(signal) or not math.isfinite(noise):
        raise DegenerateInput("reference image has no band-pass content; NQM is undefined")
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(signal / noise)
