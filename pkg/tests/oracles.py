"""Slow scalar-loop reference implementations of the image-quality metrics.

They share no code with the package: windows, pyramids and DFTs are
spelled out element by element.
"""

import cmath
import math

import numpy as np


def psnr_oracle(a, b):
    err, n = 0.0, 0
    for v, u in zip(np.ravel(a).tolist(), np.ravel(b).tolist()):
        err += (v - u) ** 2
        n += 1
    return 10 * math.log10(255.0 ** 2 / (err / n))


def luma_oracle(img):
    if img.ndim == 2:
        return [[float(v) for v in row] for row in img]
    return [[0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2] for px in row] for row in img.tolist()]


def window_oracle():
    w = [[math.exp(-((i - 5) ** 2 + (j - 5) ** 2) / (2 * 1.5 ** 2)) for j in range(11)] for i in range(11)]
    s = sum(map(sum, w))
    return [[v / s for v in row] for row in w]


def ssim_map_oracle(x, y):
    """Returns (mean ssim, mean contrast-structure) over valid 11x11 windows."""
    win = window_oracle()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    h, w = len(x), len(x[0])
    s_sum = cs_sum = 0.0
    count = 0
    for i in range(h - 10):
        for j in range(w - 10):
            mx = my = xx = yy = xy = 0.0
            for di in range(11):
                for dj in range(11):
                    g = win[di][dj]
                    p, q = x[i + di][j + dj], y[i + di][j + dj]
                    mx += g * p
                    my += g * q
                    xx += g * p * p
                    yy += g * q * q
                    xy += g * p * q
            vx, vy, cov = xx - mx * mx, yy - my * my, xy - mx * my
            cs = (2 * cov + c2) / (vx + vy + c2)
            s_sum += cs * (2 * mx * my + c1) / (mx * mx + my * my + c1)
            cs_sum += cs
            count += 1
    return s_sum / count, cs_sum / count


def halve_oracle(img):
    h, w = len(img), len(img[0])

    def at(i, j):  # symmetric extension by one sample at the far edges
        return img[min(i, h - 1)][min(j, w - 1)]

    return [[(at(i, j) + at(i + 1, j) + at(i, j + 1) + at(i + 1, j + 1)) / 4 for j in range(0, w, 2)]
            for i in range(0, h, 2)]


def mssim_oracle(a, b, levels):
    weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333][:levels]
    total = sum(weights)
    x, y = luma_oracle(a), luma_oracle(b)
    result = 1.0
    for level in range(levels):
        s, cs = ssim_map_oracle(x, y)
        value = s if level == levels - 1 else cs
        result *= max(value, 0.0) ** (weights[level] / total)
        x, y = halve_oracle(x), halve_oracle(y)
    return result


def dft_matrix(n):
    return np.array([[cmath.exp(-2j * math.pi * u * k / n) for k in range(n)] for u in range(n)])


def nqm_oracle(pred, ref):
    ref, pred = np.array(luma_oracle(ref)), np.array(luma_oracle(pred))
    h, w = ref.shape
    fh, fw = dft_matrix(h), dft_matrix(w)
    ih, iw = np.conj(fh) / h, np.conj(fw) / w

    def signed(k, n):
        return k if k < (n + 1) // 2 else k - n

    def raised_cos(v, lo, hi, outside, phase):
        if not (lo <= v <= hi):
            v = outside
        return 0.5 * (1 + math.cos(math.pi * math.log2(v) - phase))

    filters = [np.zeros((h, w)) for _ in range(6)]
    for u in range(h):
        for v in range(w):
            r = math.sqrt(signed(u, h) ** 2 + signed(v, w) ** 2)
            filters[0][u, v] = raised_cos(r + 2, 1, 4, 4, math.pi)
            filters[1][u, v] = raised_cos(r, 1, 4, 4, math.pi)
            filters[2][u, v] = raised_cos(r, 2, 8, 0.5, 0)
            filters[3][u, v] = raised_cos(r, 4, 16, 4, math.pi)
            filters[4][u, v] = raised_cos(r, 8, 32, 0.5, 0)
            filters[5][u, v] = raised_cos(r, 16, 64, 4, math.pi)

    def bands(img):
        spec = fh @ img @ fw.T
        return [np.real(ih @ (g * spec) @ iw.T) for g in filters]

    def csf(f):
        return 1 / (200 * 2.6 * (0.0192 + 0.114 * f) * math.exp(-((0.114 * f) ** 1.1)))

    ang = 180 / (3.5 * math.pi)
    ref_parts, pred_parts = bands(ref), bands(pred)
    sig = noise = 0.0
    acc_r, acc_p = ref_parts[0].copy(), pred_parts[0].copy()
    restored_r, restored_p = np.zeros((h, w)), np.zeros((h, w))
    for k in range(5):
        br, bp = ref_parts[k + 1], pred_parts[k + 1]
        det = csf(2 ** (k + 1) / ang)
        mask_ct = csf(k + 1)
        for i in range(h):
            for j in range(w):
                cr = br[i, j] / acc_r[i, j]
                cp = bp[i, j] / acc_p[i, j]
                cp_clamped = 1.0 if abs(cp) > 1 else cp
                thr = mask_ct * (0.86 * (cr / mask_ct - 1) + 0.3)
                chosen = br[i, j] if abs(cp_clamped - cr) - thr < 0 else bp[i, j]
                restored_r[i, j] += 0.0 if abs(cr) < det else br[i, j]
                restored_p[i, j] += 0.0 if abs(cp) < det else chosen
        acc_r, acc_p = acc_r + br, acc_p + bp
    for i in range(h):
        for j in range(w):
            sig += restored_r[i, j] ** 2
            noise += (restored_r[i, j] - restored_p[i, j]) ** 2
    return 10 * math.log10(sig / noise)
