import math

import numpy as np
import pytest

from microexpr.nn import (
    Adam,
    CheckpointError,
    Conv2D,
    Dense,
    Flatten,
    LayerStack,
    LSTMCell,
    LSTMStack,
    MaxPool2D,
    Parameter,
    ReLU,
    TrainConfig,
    cross_entropy_from_logits,
    fit,
    grad_check,
    load_checkpoint,
    lstm_step,
    save_checkpoint,
    softmax_predict,
)
from microexpr.nn.layers import ShapeError


def fd_check_layer(layer, x, seed=0, h=1e-5):
    """Gradient-check a layer under the loss L = sum(R * layer(x))."""
    rng = np.random.default_rng(seed)
    out = layer.forward(x)
    r = rng.normal(size=out.shape)

    def loss_fn():
        return float((layer.forward(x) * r).sum())

    for p in layer.params():
        p.zero_grad()
    layer.forward(x)
    layer.backward(r)
    analytic = [p.grad.copy() for p in layer.params()]
    return grad_check(loss_fn, layer.params(), analytic, h=h)


class TestConv2D:
    def test_one_by_one_identity(self):
        conv = Conv2D(1, 1, ksize=1, pad=0)
        conv.w.data[...] = 1.0
        conv.b.data[...] = 0.0
        x = np.random.default_rng(0).random((2, 1, 5, 5))
        np.testing.assert_allclose(conv.forward(x), x)

    def test_averaging_kernel_constant(self):
        conv = Conv2D(1, 1, ksize=3, pad=1)
        conv.w.data[...] = 1.0 / 9.0
        conv.b.data[...] = 0.0
        x = np.full((1, 1, 8, 8), 0.7)
        out = conv.forward(x)
        np.testing.assert_allclose(out[0, 0, 1:-1, 1:-1], 0.7)

    def test_kernel_gradient_fd(self):
        rng = np.random.default_rng(1)
        conv = Conv2D(2, 3, ksize=3, pad=1, rng=rng)
        x = rng.normal(size=(1, 2, 8, 8))
        report = fd_check_layer(conv, x)
        assert report.max_rel_error < 1e-5, report.worst()

    def test_input_gradient_fd(self):
        rng = np.random.default_rng(2)
        conv = Conv2D(2, 2, ksize=3, pad=1, rng=rng)
        x = rng.normal(size=(1, 2, 6, 6))
        out = conv.forward(x)
        r = rng.normal(size=out.shape)
        gin = conv.backward(r)
        h = 1e-6
        for idx in [(0, 0, 0, 0), (0, 1, 3, 2), (0, 0, 5, 5)]:
            xp = x.copy(); xp[idx] += h
            xm = x.copy(); xm[idx] -= h
            fd = ((conv.forward(xp) * r).sum() - (conv.forward(xm) * r).sum()) / (2 * h)
            assert abs(fd - gin[idx]) / max(abs(fd), 1e-8) < 1e-5

    def test_stride_two_shape(self):
        conv = Conv2D(1, 4, ksize=3, stride=2, pad=1)
        out = conv.forward(np.zeros((2, 1, 8, 8)))
        assert out.shape == (2, 4, 4, 4)

    def test_channel_mismatch(self):
        conv = Conv2D(3, 4)
        with pytest.raises(ShapeError):
            conv.forward(np.zeros((1, 2, 8, 8)))


class TestPoolAndDense:
    def test_maxpool_values(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        out = MaxPool2D(2).forward(x)
        np.testing.assert_array_equal(out[0, 0], [[5, 7], [13, 15]])

    def test_maxpool_gradient_routes_to_max(self):
        pool = MaxPool2D(2)
        x = np.random.default_rng(3).normal(size=(2, 3, 4, 4))
        out = pool.forward(x)
        g = np.ones_like(out)
        gin = pool.backward(g)
        assert gin.sum() == pytest.approx(out.size)
        assert ((gin != 0).sum()) == out.size

    def test_maxpool_odd_rejected(self):
        with pytest.raises(ShapeError):
            MaxPool2D(2).forward(np.zeros((1, 1, 5, 4)))

    def test_dense_gradient_fd(self):
        rng = np.random.default_rng(4)
        dense = Dense(7, 3, rng=rng)
        report = fd_check_layer(dense, rng.normal(size=(4, 7)))
        assert report.max_rel_error < 1e-7, report.worst()

    def test_stack_conv_relu_fc_fd(self):
        rng = np.random.default_rng(5)
        stack = LayerStack([
            Conv2D(2, 3, rng=rng, name="c1"), ReLU(), MaxPool2D(2),
            Flatten(), Dense(3 * 16, 5, rng=rng, name="fc"),
        ])
        x = rng.normal(size=(2, 2, 8, 8))
        report = fd_check_layer(stack, x)
        assert report.max_rel_error < 1e-5, report.worst()


class TestLSTM:
    def test_zero_weights_zero_hidden(self):
        cell = LSTMCell(4, 3)
        cell.w.data[...] = 0.0
        cell.b.data[...] = 0.0
        z, h, c = lstm_step(cell, np.zeros(4), np.zeros(3), np.zeros(3))
        np.testing.assert_array_equal(h, 0.0)
        np.testing.assert_array_equal(z, h)

    def test_saturated_forget_gate_preserves_cell(self):
        cell = LSTMCell(4, 3)
        cell.w.data[...] = 0.0
        cell.b.data[...] = 0.0
        cell.b.data[3:6] = 20.0     # forget gate slice
        c_prev = np.array([[0.9, -0.5, 0.3]])
        _, _, c = lstm_step(cell, np.zeros((1, 4)), np.zeros((1, 3)), c_prev)
        assert np.abs(c - c_prev).max() < 1e-6

    def test_nan_input_rejected(self):
        cell = LSTMCell(2, 2)
        with pytest.raises(ValueError):
            lstm_step(cell, np.array([np.nan, 0.0]), np.zeros(2), np.zeros(2))

    def test_bptt_gradient_fd(self):
        rng = np.random.default_rng(6)
        stack = LSTMStack(6, (8,), rng=rng)
        xs = rng.normal(size=(2, 5, 6))
        out = stack.forward(xs)
        r = rng.normal(size=out.shape)

        def loss_fn():
            return float((stack.forward(xs) * r).sum())

        for p in stack.params():
            p.zero_grad()
        stack.forward(xs)
        stack.backward(r)
        analytic = [p.grad.copy() for p in stack.params()]
        report = grad_check(loss_fn, stack.params(), analytic)
        assert report.max_rel_error < 1e-4, report.worst()

    def test_two_layer_stack_shapes(self):
        stack = LSTMStack(5, (8, 4))
        out = stack.forward(np.zeros((3, 9, 5)))
        assert out.shape == (3, 9, 4)
        gin = stack.backward(np.ones_like(out))
        assert gin.shape == (3, 9, 5)

    def test_forget_bias_initialized_to_one(self):
        cell = LSTMCell(3, 4)
        np.testing.assert_array_equal(cell.b.data[4:8], 1.0)
        np.testing.assert_array_equal(cell.b.data[:4], 0.0)


class TestSoftmaxAndLoss:
    def test_uniform(self):
        np.testing.assert_allclose(softmax_predict(np.zeros(5)), 0.2)

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=12)
        d = np.abs(softmax_predict(logits) - softmax_predict(logits + 3.7)).max()
        assert d < 1e-12

    def test_reference_values(self):
        np.testing.assert_allclose(softmax_predict(np.array([1.0, 2.0, 3.0])),
                                   [0.09003, 0.24473, 0.66524], atol=1e-5)

    def test_sums_to_one(self):
        rng = np.random.default_rng(8)
        p = softmax_predict(rng.normal(size=(10, 6)))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            softmax_predict(np.array([1.0, np.inf]))

    @pytest.mark.parametrize("c", [2, 3, 5, 7])
    def test_uniform_cross_entropy_exact(self, c):
        loss, _ = cross_entropy_from_logits(np.zeros((1, c)), np.array([0]))
        assert loss == math.log(c)

    def test_loss_gradient_fd(self):
        rng = np.random.default_rng(9)
        logits = rng.normal(size=(4, 3))
        labels = np.array([0, 2, 1, 1])
        _, grad = cross_entropy_from_logits(logits, labels)
        h = 1e-6
        for idx in [(0, 0), (1, 2), (3, 1)]:
            lp = logits.copy(); lp[idx] += h
            lm = logits.copy(); lm[idx] -= h
            fd = (cross_entropy_from_logits(lp, labels)[0]
                  - cross_entropy_from_logits(lm, labels)[0]) / (2 * h)
            assert abs(fd - grad[idx]) < 1e-8


class TestAdam:
    def test_first_step_magnitude(self):
        p = Parameter(np.array([1.0]))
        opt = Adam([p], lr=1e-5, decay=1e-6)
        p.grad[...] = 2.0
        opt.step()
        assert p.data[0] == pytest.approx(1.0 - 1e-5, abs=1e-12)

    def test_zero_gradient_no_change(self):
        p = Parameter(np.array([3.0, -2.0]))
        opt = Adam([p])
        opt.step()
        np.testing.assert_array_equal(p.data, [3.0, -2.0])

    def test_equal_gradients_equal_updates(self):
        p = Parameter(np.array([1.0, 5.0]))
        opt = Adam([p], lr=1e-3)
        p.grad[...] = 0.7
        opt.step()
        assert (1.0 - p.data[0]) == pytest.approx(5.0 - p.data[1], abs=1e-15)

    def test_lr_decay_schedule(self):
        p = Parameter(np.array([0.0]))
        opt = Adam([p], lr=1.0, decay=0.5)
        p.grad[...] = 1.0
        opt.step()
        first = -p.data[0]
        p.data[...] = 0.0
        p.grad[...] = 1.0
        opt.step()
        second = -p.data[0]
        # second step rate is lr / (1 + 0.5 * 1)
        assert second / first == pytest.approx(1.0 / 1.5, rel=1e-6)

    def test_weight_decay_mode(self):
        p = Parameter(np.array([10.0]))
        opt = Adam([p], lr=1e-2, decay=1.0, decay_mode="weight")
        opt.step()   # gradient zero, but weight decay pulls towards zero
        assert p.data[0] < 10.0

    def test_shape_mismatch_rejected(self):
        p = Parameter(np.zeros(3))
        opt = Adam([p])
        p.grad = np.zeros(4)
        with pytest.raises(ValueError):
            opt.step()


class _TinyClassifier:
    def __init__(self, d, c, seed):
        self.dense = Dense(d, c, rng=np.random.default_rng(seed))

    def parameters(self):
        return self.dense.params()

    def batch_loss(self, x, y, loss_on="final"):
        loss, _ = cross_entropy_from_logits(self.dense.forward(x), y)
        return loss

    def training_step(self, x, y, loss_on="final"):
        loss, dl = cross_entropy_from_logits(self.dense.forward(x), y)
        self.dense.backward(dl)
        return loss

    def predict_classes(self, x):
        return self.dense.forward(x).argmax(axis=1)


class _FrozenModel(_TinyClassifier):
    def training_step(self, x, y, loss_on="final"):
        return self.batch_loss(x, y, loss_on)   # leaves gradients at zero


def blobs(n_per_class=8, d=4, seed=0):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(n_per_class, d)) + np.array([3.0] + [0.0] * (d - 1))
    x1 = rng.normal(size=(n_per_class, d)) - np.array([3.0] + [0.0] * (d - 1))
    x = np.vstack([x0, x1])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return x, y


class TestFit:
    def test_converged_model_stops_after_patience(self):
        x, y = blobs()
        model = _FrozenModel(4, 2, seed=0)
        result = fit(model, x, y, TrainConfig(max_epochs=50, patience=5, lr=1e-2))
        assert result.stopped_early
        assert result.epochs_run == 5

    def test_overfit_separable(self):
        x, y = blobs()
        model = _TinyClassifier(4, 2, seed=1)
        result = fit(model, x, y, TrainConfig(max_epochs=60, lr=0.05, seed=3))
        assert (model.predict_classes(x) == y).all()
        drops = sum(b <= a for a, b in zip(result.loss_history, result.loss_history[1:]))
        assert drops / (len(result.loss_history) - 1) >= 0.9

    def test_same_seed_identical_history(self):
        x, y = blobs()
        r1 = fit(_TinyClassifier(4, 2, seed=2), x, y,
                 TrainConfig(max_epochs=20, lr=0.05, seed=5, batch_size=4))
        r2 = fit(_TinyClassifier(4, 2, seed=2), x, y,
                 TrainConfig(max_epochs=20, lr=0.05, seed=5, batch_size=4))
        assert r1.loss_history == r2.loss_history

    def test_stop_accuracy(self):
        x, y = blobs()
        model = _TinyClassifier(4, 2, seed=4)
        result = fit(model, x, y,
                     TrainConfig(max_epochs=100, lr=0.05, stop_accuracy=1.0))
        assert result.stopped_early
        assert result.final_train_accuracy == 1.0

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError):
            fit(_TinyClassifier(4, 2, 0), np.zeros((0, 4)), np.zeros(0, dtype=int),
                TrainConfig())


class TestGradCheckReport:
    def test_linear_head_tight(self):
        rng = np.random.default_rng(10)
        dense = Dense(5, 3, rng=rng)
        report = fd_check_layer(dense, rng.normal(size=(2, 5)))
        assert report.max_rel_error < 1e-7
        assert report.n_checked == 5 * 3 + 3


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        entries = [
            ("enc.conv1.w", "conv2d", rng.normal(size=(3, 3, 2, 4))),
            ("enc.conv1.b", "conv2d", rng.normal(size=4)),
            ("head.w", "dense", rng.normal(size=(8, 3))),
        ]
        path = tmp_path / "model.ckpt"
        save_checkpoint(entries, path)
        loaded = load_checkpoint(path)
        assert [(n, k) for n, k, _ in loaded] == [(n, k) for n, k, _ in entries]
        for (_, _, a), (_, _, b) in zip(entries, loaded):
            np.testing.assert_array_equal(a, b)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
