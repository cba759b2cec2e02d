"""Bias-corrected ADAM with either step-wise learning-rate decay or a
coupled weight-decay term.

In ``decay_mode="lr"`` the rate at step k (counting completed steps) is
lr / (1 + decay * k); in ``decay_mode="weight"`` the rate stays fixed and
``decay * param`` is added to the gradient before the moment updates.
"""

from __future__ import annotations

import numpy as np

from .layers import Parameter


class Adam:
    def __init__(self, params: list[Parameter], lr: float = 1e-5, decay: float = 1e-6,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 decay_mode: str = "lr"):
        if decay_mode not in ("lr", "weight"):
            raise ValueError(f"unknown decay_mode {decay_mode!r}")
        self.params = list(params)
        self.lr = lr
        self.decay = decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay_mode = decay_mode
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        if self.decay_mode == "lr":
            lr_t = self.lr / (1.0 + self.decay * self.step_count)
        else:
            lr_t = self.lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for k, p in enumerate(self.params):
            g = p.grad
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter "
                                 f"{p.name!r} shape {p.data.shape}")
            if self.decay_mode == "weight":
                g = g + self.decay * p.data
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p.data -= lr_t * m_hat / (np.sqrt(v_hat) + self.eps)
