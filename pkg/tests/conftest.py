import numpy as np
import pytest

from microexpr.imageops import smooth_noise


def textured_shift_pair(side: int, shift_x: int, shift_y: int = 0, seed: int = 0):
    """A textured frame pair whose content moves by exactly (shift_x, shift_y) px.

    Both frames are windows of one larger texture, so the shift is exact
    everywhere (no wrap-around artifacts).
    """
    margin = max(abs(shift_x), abs(shift_y), 1)
    rng = np.random.default_rng(seed)
    big = smooth_noise(rng, side + 2 * margin, side + 2 * margin, passes=2, lo=0.1, hi=0.9)
    i0 = big[margin:margin + side, margin:margin + side]
    i1 = big[margin - shift_y:margin - shift_y + side,
             margin - shift_x:margin - shift_x + side]
    return i0.copy(), i1.copy()


def drifting_sequence(side: int, n_frames: int, step_x: float, step_y: float = 0.0,
                      seed: int = 0) -> np.ndarray:
    """Frames whose whole texture drifts by (step_x, step_y) px per frame."""
    span_x = int(np.ceil(abs(step_x) * (n_frames - 1))) + 1
    span_y = int(np.ceil(abs(step_y) * (n_frames - 1))) + 1
    rng = np.random.default_rng(seed)
    big = smooth_noise(rng, side + 2 * span_y, side + 2 * span_x, passes=2, lo=0.1, hi=0.9)
    frames = np.empty((n_frames, side, side))
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    for t in range(n_frames):
        # sample the big texture at positions offset by t drift steps
        frames[t] = _sample(big, xx + span_x - step_x * t, yy + span_y - step_y * t)
    return frames


def _sample(img, x, y):
    h, w = img.shape
    x = np.clip(x, 0, w - 1.0)
    y = np.clip(y, 0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(int), w - 2)
    y0 = np.minimum(np.floor(y).astype(int), h - 2)
    fx, fy = x - x0, y - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x0 + 1] * fx
    bot = img[y0 + 1, x0] * (1 - fx) + img[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


@pytest.fixture(scope="session")
def tiny_synth_dataset():
    from microexpr.dataset import SynthSpec, synthesize_dataset
    spec = SynthSpec(n_subjects=3, n_classes=2, frames_per_video=6,
                     image_size=32, motion_amplitude=2.0, noise_sigma=0.01)
    return synthesize_dataset(spec, seed=11), spec
