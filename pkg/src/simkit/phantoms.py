"""Synthetic samples used by tests, demos and the acceptance suite."""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def smooth_texture(shape, rng: np.random.Generator, scale: float = 4.0,
                   periodic: bool = True) -> np.ndarray:
    """Gaussian-filtered white noise rescaled to [0, 1]."""
    noise = rng.standard_normal(shape)
    mode = "wrap" if periodic else "reflect"
    tex = ndimage.gaussian_filter(noise, scale, mode=mode)
    tex -= tex.min()
    peak = tex.max()
    return tex / peak if peak > 0 else tex


def gaussian_spots(shape, centers, sigma: float, amplitude: float = 1.0) -> np.ndarray:
    """Sum of isotropic Gaussian spots at (y, x) centers (sub-pixel allowed)."""
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    out = np.zeros(shape)
    for cy, cx in centers:
        out += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
    return amplitude * out


def point_pair(shape, separation: int, axis: int = 1) -> np.ndarray:
    """Two unit point emitters ``separation`` pixels apart around the center."""
    img = np.zeros(shape)
    cy, cx = shape[0] // 2, shape[1] // 2
    if axis == 1:
        img[cy, cx - separation // 2] = 1.0
        img[cy, cx - separation // 2 + separation] = 1.0
    else:
        img[cy - separation // 2, cx] = 1.0
        img[cy - separation // 2 + separation, cx] = 1.0
    return img


def cell_like(shape, rng: np.random.Generator, n_blobs: int = 40, n_fibres: int = 12,
              background: float = 0.05) -> np.ndarray:
    """Sparse fluorescence-like sample: blobs plus thin curved filaments, in [0, 1]."""
    h, w = shape
    img = np.full(shape, background)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        s = rng.uniform(0.8, 3.0)
        img += rng.uniform(0.3, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    for _ in range(n_fibres):
        t = np.linspace(0, 1, 4 * max(h, w))
        y0, x0 = rng.uniform(0, h), rng.uniform(0, w)
        ang = rng.uniform(0, 2 * np.pi)
        curv = rng.normal(0, 2.0)
        length = rng.uniform(0.3, 0.9) * max(h, w)
        a = ang + curv * t
        ys = (y0 + length * np.cumsum(np.sin(a)) / t.size).astype(int) % h
        xs = (x0 + length * np.cumsum(np.cos(a)) / t.size).astype(int) % w
        fibre = np.zeros(shape)
        fibre[ys, xs] = 1.0
        img += 0.6 * ndimage.gaussian_filter(fibre, 0.7, mode="wrap") / 0.3
    return np.clip(img / img.max(), 0.0, 1.0)


def translate(image: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Periodic sub-pixel translation via the Fourier shift theorem."""
    fy = np.fft.fftfreq(image.shape[0])[:, None]
    fx = np.fft.fftfreq(image.shape[1])[None, :]
    ramp = np.exp(-2j * np.pi * (fy * dy + fx * dx))
    return np.fft.ifft2(np.fft.fft2(image) * ramp).real
