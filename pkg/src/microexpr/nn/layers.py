"""Feed-forward layers (NCHW) with explicit forward/backward passes.

Each layer caches what its backward pass needs on forward; parameter
gradients accumulate into ``Parameter.grad`` so shared layers (e.g. an
encoder applied to every frame of a sequence) sum their contributions.
Channel-first layout keeps the im2col copies on contiguous rows, which
is what makes desk-scale training tolerable on one core.
"""

from __future__ import annotations

import numpy as np


class ShapeError(Exception):
    pass


class Parameter:
    """A trainable array with its gradient accumulator."""

    __slots__ = ("name", "kind", "data", "grad")

    def __init__(self, data: np.ndarray, name: str = "", kind: str = "param"):
        self.name = name
        self.kind = kind
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv2D:
    """Cross-correlation over (N, C, H, W) input; kernels are (Cout, Cin, kh, kw)."""

    def __init__(self, in_channels: int, out_channels: int, ksize: int = 3,
                 stride: int = 1, pad: int = 1, rng: np.random.Generator | None = None,
                 name: str = "conv"):
        rng = rng or np.random.default_rng(0)
        fan_in = ksize * ksize * in_channels
        self.w = Parameter(he_uniform(rng, (out_channels, in_channels, ksize, ksize), fan_in),
                           f"{name}.w", kind="conv2d")
        self.b = Parameter(np.zeros(out_channels), f"{name}.b", kind="conv2d")
        self.stride = stride
        self.pad = pad
        self._cache = None

    @property
    def in_channels(self) -> int:
        return self.w.shape[1]

    def params(self):
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.w.shape[1]:
            raise ShapeError(f"conv expected (N,{self.w.shape[1]},H,W), got {x.shape}")
        cout, cin, kh, kw = self.w.shape
        s = self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        n, _, hp, wp = xp.shape
        oh = (hp - kh) // s + 1
        ow = (wp - kw) // s + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"kernel {kh}x{kw} does not fit padded input {hp}x{wp}")
        # im2col once; the buffer is reused by backward for the weight gradient
        cols = np.empty((n, cin * kh * kw, oh * ow))
        col5 = cols.reshape(n, cin, kh * kw, oh, ow)
        tap = 0
        for u in range(kh):
            for v in range(kw):
                col5[:, :, tap, :, :] = xp[:, :, u:u + s * oh:s, v:v + s * ow:s]
                tap += 1
        out = np.matmul(self.w.data.reshape(cout, -1), cols)
        out += self.b.data[None, :, None]
        self._cache = (cols, xp.shape, oh, ow)
        return out.reshape(n, cout, oh, ow)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        cols, xp_shape, oh, ow = self._cache
        cout, cin, kh, kw = self.w.shape
        s = self.stride
        n = xp_shape[0]
        g3 = gout.reshape(n, cout, oh * ow)
        self.b.grad += g3.sum(axis=(0, 2))
        self.w.grad += np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape)
        dcols = np.matmul(self.w.data.reshape(cout, -1).T, g3)
        dcol5 = dcols.reshape(n, cin, kh * kw, oh, ow)
        gxp = np.zeros(xp_shape)
        tap = 0
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u:u + s * oh:s, v:v + s * ow:s] += dcol5[:, :, tap, :, :]
                tap += 1
        p = self.pad
        if p:
            return gxp[:, :, p:-p, p:-p]
        return gxp


class MaxPool2D:
    """Non-overlapping max pooling; gradient routes to the first maximum."""

    def __init__(self, size: int = 2):
        self.size = size
        self._cache = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        k = self.size
        if h % k or w % k:
            raise ShapeError(f"pooling size {k} does not divide input {h}x{w}")
        oh, ow = h // k, w // k
        windows = np.ascontiguousarray(
            x.reshape(n, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5)
        ).reshape(n * c * oh * ow, k * k)
        idx = windows.argmax(axis=1)
        rows = np.arange(windows.shape[0])
        out = windows[rows, idx].reshape(n, c, oh, ow)
        self._cache = (x.shape, idx, rows)
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        x_shape, idx, rows = self._cache
        n, c, h, w = x_shape
        k = self.size
        oh, ow = h // k, w // k
        gwin = np.zeros((n * c * oh * ow, k * k))
        gwin[rows, idx] = gout.reshape(-1)
        return (gwin.reshape(n, c, oh, ow, k, k)
                    .transpose(0, 1, 2, 4, 3, 5).reshape(x_shape))


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        return np.where(self._mask, gout, 0.0)


class Flatten:
    def __init__(self):
        self._shape = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        return gout.reshape(self._shape)


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None,
                 name: str = "dense"):
        rng = rng or np.random.default_rng(0)
        self.w = Parameter(he_uniform(rng, (n_in, n_out), n_in), f"{name}.w", kind="dense")
        self.b = Parameter(np.zeros(n_out), f"{name}.b", kind="dense")
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ShapeError(f"dense expected (N,{self.w.shape[0]}), got {x.shape}")
        self._cache = x
        return x @ self.w.data + self.b.data

    def backward(self, gout: np.ndarray) -> np.ndarray:
        x = self._cache
        self.w.grad += x.T @ gout
        self.b.grad += gout.sum(axis=0)
        return gout @ self.w.data.T


class LayerStack:
    """Sequential container that also records per-layer activations, so
    callers can read intermediate feature maps and the gradients flowing
    into them (needed for class-activation mapping)."""

    def __init__(self, layers: list):
        self.layers = layers
        self.activations: list[np.ndarray] = []

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.activations = [x]
        for layer in self.layers:
            x = layer.forward(x)
            self.activations.append(x)
        return x

    def backward(self, gout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            gout = layer.backward(gout)
        return gout

    def backward_to(self, gout: np.ndarray, stop_index: int) -> np.ndarray:
        """Backpropagate from the top down to (excluding) ``layers[stop_index]``,
        returning the gradient w.r.t. that layer's output."""
        for layer in reversed(self.layers[stop_index + 1:]):
            gout = layer.backward(gout)
        return gout

    def output_of(self, index: int) -> np.ndarray:
        return self.activations[index + 1]
