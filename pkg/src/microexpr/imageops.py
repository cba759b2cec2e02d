"""Small grayscale image primitives shared across the pipeline."""

from __future__ import annotations

import numpy as np


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resample with endpoint-aligned sample positions.

    Returns an exact copy when the target size matches the input, so
    resampling at the native size is the identity.
    """
    if img.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.astype(np.float64, copy=True)
    out = _resample_axis(img.astype(np.float64, copy=False), out_h, axis=0)
    return _resample_axis(out, out_w, axis=1)


def _resample_axis(img: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = img.shape[axis]
    if n_in == n_out:
        return img
    if n_in == 1:
        reps = [1, 1]
        reps[axis] = n_out
        return np.tile(img, reps)
    if n_out == 1:
        pos = np.array([0.5 * (n_in - 1)])
    else:
        pos = np.linspace(0.0, n_in - 1, n_out)
    lo = np.floor(pos).astype(np.intp)
    lo = np.minimum(lo, n_in - 2)
    frac = pos - lo
    a = np.take(img, lo, axis=axis)
    b = np.take(img, lo + 1, axis=axis)
    shape = [1, 1]
    shape[axis] = n_out
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def warp_bilinear(img: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Sample ``img`` at (x + dx, y + dy) with bilinear interpolation.

    Coordinates outside the image are clamped to the border (replication).
    """
    h, w = img.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    x = np.clip(xx + dx, 0.0, w - 1.0)
    y = np.clip(yy + dy, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2) if w > 1 else np.zeros_like(x, dtype=np.intp)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2) if h > 1 else np.zeros_like(y, dtype=np.intp)
    fx = x - x0
    fy = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def median3x3(img: np.ndarray) -> np.ndarray:
    """3x3 median filter with edge replication."""
    padded = np.pad(img, 1, mode="edge")
    h, w = img.shape
    stack = np.empty((9, h, w), dtype=img.dtype)
    k = 0
    for dy in range(3):
        for dx in range(3):
            stack[k] = padded[dy:dy + h, dx:dx + w]
            k += 1
    return np.median(stack, axis=0)


def smooth_noise(rng: np.random.Generator, h: int, w: int,
                 passes: int = 2, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Band-limited random texture in [lo, hi]; repeated 3x3 box blur of noise."""
    img = rng.random((h, w))
    for _ in range(passes):
        padded = np.pad(img, 1, mode="edge")
        acc = np.zeros_like(img)
        for dy in range(3):
            for dx in range(3):
                acc += padded[dy:dy + h, dx:dx + w]
        img = acc / 9.0
    mn, mx = img.min(), img.max()
    if mx > mn:
        img = (img - mn) / (mx - mn)
    else:
        img = np.zeros_like(img)
    return lo + (hi - lo) * img
