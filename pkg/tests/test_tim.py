import numpy as np
import pytest

from microexpr.tim import TimError, interpolate

from conftest import drifting_sequence


def blob_sequence(n_frames, side=32, step=1.0):
    """Frames with a bright gaussian blob whose center moves ``step`` px/frame."""
    y, x = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float),
                       indexing="ij")
    frames = np.empty((n_frames, side, side))
    for t in range(n_frames):
        cx = 6.0 + step * t
        frames[t] = np.exp(-((x - cx) ** 2 + (y - side / 2) ** 2) / 8.0)
    return frames


def centroid_x(frame):
    xs = np.arange(frame.shape[1], dtype=float)
    w = frame.sum()
    return float((frame.sum(axis=0) * xs).sum() / w)


class TestContracts:
    @pytest.mark.parametrize("mode", ["linear", "sine"])
    def test_constant_sequence(self, mode):
        frame = np.random.default_rng(0).random((8, 8))
        seq = np.tile(frame, (5, 1, 1))
        out = interpolate(seq, 7, mode=mode)
        assert out.shape[0] == 7
        for t in range(7):
            np.testing.assert_allclose(out[t], frame, atol=1e-12)

    @pytest.mark.parametrize("mode", ["linear", "sine"])
    @pytest.mark.parametrize("n", [2, 5, 10, 23])
    def test_output_length_exact(self, mode, n):
        seq = np.random.default_rng(1).random((6, 8, 8))
        assert interpolate(seq, n, mode=mode).shape == (n, 8, 8)

    def test_linear_identity_at_same_length(self):
        seq = np.random.default_rng(2).random((9, 12, 12))
        np.testing.assert_array_equal(interpolate(seq, 9, mode="linear"), seq)

    def test_sine_reconstruction_at_same_length(self):
        seq = np.random.default_rng(3).random((7, 10, 10))
        np.testing.assert_allclose(interpolate(seq, 7, mode="sine"), seq, atol=1e-9)

    def test_linear_endpoints_preserved(self):
        seq = np.random.default_rng(4).random((5, 6, 6))
        out = interpolate(seq, 11, mode="linear")
        np.testing.assert_array_equal(out[0], seq[0])
        np.testing.assert_array_equal(out[-1], seq[-1])

    @pytest.mark.parametrize("mode", ["linear", "sine"])
    def test_range_clamped(self, mode):
        seq = np.random.default_rng(5).random((6, 8, 8))
        out = interpolate(seq, 17, mode=mode)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_errors(self):
        seq = np.random.default_rng(6).random((4, 4, 4))
        with pytest.raises(TimError):
            interpolate(seq, 1)
        with pytest.raises(TimError):
            interpolate(seq[:1], 5)
        with pytest.raises(TimError):
            interpolate(seq, 5, mode="cubic")


class TestMotionResampling:
    def test_downsampling_doubles_step(self):
        # 20 frames at 1 px/frame span 19 px; 10 output frames step 19/9 ~ 2x
        seq = blob_sequence(20, step=1.0)
        out = interpolate(seq, 10, mode="linear")
        centers = [centroid_x(f) for f in out]
        steps = np.diff(centers)
        np.testing.assert_allclose(steps, 19.0 / 9.0, rtol=0.08)

    def test_downsample_upsample_stability(self):
        seq = drifting_sequence(24, 12, 1.0, seed=8)
        back = interpolate(interpolate(seq, 6, mode="linear"), 12, mode="linear")
        mean_err = np.abs(back - seq).mean()
        inter_frame = np.abs(np.diff(seq, axis=0)).mean()
        assert mean_err <= inter_frame
