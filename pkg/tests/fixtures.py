"""Shared fixtures and slow reference implementations used as oracles."""

import math

import numpy as np


def fixture_glyph_28() -> np.ndarray:
    """A fixed 28x28 'H' with a soft edge and a horizontal intensity ramp."""
    g = np.zeros((28, 28))
    g[5:23, 7:11] = 1.0
    g[5:23, 17:21] = 1.0
    g[12:16, 7:21] = 1.0
    g *= np.linspace(0.6, 1.0, 28)[None, :]
    g[4, 7:11] = 0.4
    g[23, 17:21] = 0.3
    return g


def loop_gaussian_kernel(side, sigma):
    c = (side - 1) / 2.0
    k = [[math.exp(-((i - c) ** 2 + (j - c) ** 2) / (2 * sigma**2)) for j in range(side)] for i in range(side)]
    total = sum(map(sum, k))
    return np.array(k) / total


def loop_blur(img, kernel):
    """Direct correlation, clamp-to-edge; an even kernel's anchor sits at (side - 1) // 2."""
    h, w = img.shape
    ks = kernel.shape[0]
    a = (ks - 1) // 2
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            s = 0.0
            for i in range(ks):
                for j in range(ks):
                    yy = min(max(y + i - a, 0), h - 1)
                    xx = min(max(x + j - a, 0), w - 1)
                    s += kernel[i, j] * img[yy, xx]
            out[y, x] = s
    return out
