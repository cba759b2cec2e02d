"""LSTM cell and stack with full backpropagation through time.

Gate layout in the fused weight matrix is (input, forget, output, candidate)
over the concatenated [x, h_prev] vector.  The exposed per-step output z_t is
the hidden state h_t.  Weights initialize small-uniform (+-0.08); the forget
gate bias starts at 1 so early training preserves cell state.
"""

from __future__ import annotations

import numpy as np

from .layers import Parameter, ShapeError


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LSTMCell:
    INIT_SCALE = 0.08

    def __init__(self, input_size: int, hidden_size: int,
                 rng: np.random.Generator | None = None, name: str = "lstm"):
        rng = rng or np.random.default_rng(0)
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w = Parameter(rng.uniform(-self.INIT_SCALE, self.INIT_SCALE,
                                       size=(input_size + hidden_size, 4 * hidden_size)),
                           f"{name}.w", kind="lstm")
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size:2 * hidden_size] = 1.0   # forget gate
        self.b = Parameter(bias, f"{name}.b", kind="lstm")

    def params(self):
        return [self.w, self.b]

    def step(self, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
        """One gate update for a (B, D) batch; returns (h, c, cache)."""
        if x.shape[1] != self.input_size:
            raise ShapeError(f"lstm expected input size {self.input_size}, got {x.shape[1]}")
        hs = self.hidden_size
        xh = np.concatenate([x, h_prev], axis=1)
        gates = xh @ self.w.data + self.b.data
        i = _sigmoid(gates[:, :hs])
        f = _sigmoid(gates[:, hs:2 * hs])
        o = _sigmoid(gates[:, 2 * hs:3 * hs])
        g = np.tanh(gates[:, 3 * hs:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        cache = (xh, c_prev, i, f, o, g, tc)
        return h, c, cache

    def step_backward(self, cache, dh: np.ndarray, dc: np.ndarray):
        """Gradients for one step; returns (dx, dh_prev, dc_prev)."""
        xh, c_prev, i, f, o, g, tc = cache
        hs = self.hidden_size
        do = dh * tc
        dct = dc + dh * o * (1.0 - tc * tc)
        di = dct * g
        df = dct * c_prev
        dg = dct * i
        dc_prev = dct * f
        dgates = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ], axis=1)
        self.w.grad += xh.T @ dgates
        self.b.grad += dgates.sum(axis=0)
        dxh = dgates @ self.w.data.T
        return dxh[:, :self.input_size], dxh[:, self.input_size:], dc_prev


def lstm_step(cell: LSTMCell, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """Single exposed step: returns (z, h, c) where the output z is h."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h_prev = np.atleast_2d(np.asarray(h_prev, dtype=np.float64))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=np.float64))
    if not np.isfinite(x).all():
        raise ValueError("lstm input contains non-finite values")
    h, c, _ = cell.step(x, h_prev, c_prev)
    return h, h, c


class LSTMStack:
    """Serially stacked LSTM layers unrolled over a fixed-length sequence."""

    def __init__(self, input_size: int, hidden_sizes: tuple[int, ...],
                 rng: np.random.Generator | None = None, name: str = "lstm"):
        rng = rng or np.random.default_rng(0)
        self.cells: list[LSTMCell] = []
        size = input_size
        for k, hs in enumerate(hidden_sizes):
            self.cells.append(LSTMCell(size, hs, rng, name=f"{name}{k}"))
            size = hs
        self.output_size = size
        self._caches = None
        self._xs_shape = None

    def params(self):
        out = []
        for cell in self.cells:
            out.extend(cell.params())
        return out

    def forward(self, xs: np.ndarray) -> np.ndarray:
        """(B, T, D) feature sequences -> (B, T, H) outputs of the top layer."""
        if xs.ndim != 3:
            raise ShapeError(f"expected (B, T, D) input, got {xs.shape}")
        if not np.isfinite(xs).all():
            raise ValueError("lstm input contains non-finite values")
        b, t, _ = xs.shape
        self._xs_shape = xs.shape
        self._caches = []
        current = xs
        for cell in self.cells:
            h = np.zeros((b, cell.hidden_size))
            c = np.zeros((b, cell.hidden_size))
            outs = np.empty((b, t, cell.hidden_size))
            layer_caches = []
            for step in range(t):
                h, c, cache = cell.step(current[:, step, :], h, c)
                outs[:, step, :] = h
                layer_caches.append(cache)
            self._caches.append(layer_caches)
            current = outs
        return current

    def backward(self, gout: np.ndarray) -> np.ndarray:
        """BPTT from (B, T, H) output gradients back to (B, T, D) input gradients."""
        b, t, _ = self._xs_shape
        grad = gout
        for cell, layer_caches in zip(reversed(self.cells), reversed(self._caches)):
            dxs = np.empty((b, t, cell.input_size))
            dh = np.zeros((b, cell.hidden_size))
            dc = np.zeros((b, cell.hidden_size))
            for step in range(t - 1, -1, -1):
                dh = dh + grad[:, step, :]
                dx, dh, dc = cell.step_backward(layer_caches[step], dh, dc)
                dxs[:, step, :] = dx
            grad = dxs
        return grad
