"""Fixed-length temporal resampling of frame sequences.

Two modes:

* ``linear`` -- pixel-wise linear blend of the two bracketing source frames.
  Exact at interpolation nodes: resampling a sequence at its own length
  returns the input frames bit-for-bit.
* ``sine`` -- the source frames are mean-centered and projected onto the
  orthonormal sine/cosine eigenbasis of the path graph over the sequence
  index, then the fitted curve is resampled at uniform positions.  Basis
  dimension is min(len - 1, n - 1), so same-length resampling is an exact
  reconstruction while shortening is a smoothing projection.
"""

from __future__ import annotations

import numpy as np

MODES = ("linear", "sine")


class TimError(Exception):
    pass


def interpolate(frames: np.ndarray, n: int, mode: str = "linear",
                clamp: bool = True) -> np.ndarray:
    """Resample a (T, H, W) or (T, ...) frame stack to exactly ``n`` frames."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim < 2:
        raise TimError("frames must be a stacked sequence (T, ...)")
    if frames.shape[0] < 2:
        raise TimError("need at least 2 source frames")
    if n < 2:
        raise TimError("target length must be >= 2")
    if mode not in MODES:
        raise TimError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "linear":
        out = _interpolate_linear(frames, n)
    else:
        out = _interpolate_sine(frames, n)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


def _interpolate_linear(frames: np.ndarray, n: int) -> np.ndarray:
    length = frames.shape[0]
    out = np.empty((n,) + frames.shape[1:], dtype=np.float64)
    for j in range(n):
        x = j * (length - 1) / (n - 1)
        i0 = min(int(np.floor(x)), length - 2)
        frac = x - i0
        if frac == 0.0:
            out[j] = frames[i0]
        else:
            out[j] = (1.0 - frac) * frames[i0] + frac * frames[i0 + 1]
    return out


def _path_basis(length: int, k_max: int, t: np.ndarray) -> np.ndarray:
    """Continuous extension of the path-graph eigenvectors, sampled at t in (0, 1]."""
    ks = np.arange(1, k_max + 1)
    # sin(pi k t + pi (length - k) / (2 length)) == cos(pi k (t - 1/(2 length)))
    return np.sin(np.pi * ks[None, :] * t[:, None]
                  + np.pi * (length - ks[None, :]) / (2.0 * length))


def _interpolate_sine(frames: np.ndarray, n: int) -> np.ndarray:
    length = frames.shape[0]
    k_max = min(length - 1, n - 1)
    flat = frames.reshape(length, -1)
    mean = flat.mean(axis=0)
    centered = flat - mean

    t_src = np.arange(1, length + 1) / length
    basis = _path_basis(length, k_max, t_src)
    norms = np.linalg.norm(basis, axis=0)
    basis /= norms
    coeffs = basis.T @ centered                       # (k_max, D)

    t_out = np.arange(1, n + 1) / n
    basis_out = _path_basis(length, k_max, t_out) / norms
    out = mean + basis_out @ coeffs
    return out.reshape((n,) + frames.shape[1:])
