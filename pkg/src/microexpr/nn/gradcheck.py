"""Central finite-difference verification of analytic gradients.

Every scalar entry of every parameter is perturbed by +-h and the resulting
loss slope is compared against the analytic gradient.  The relative error
uses a small floor so near-zero gradients are judged against finite-
difference noise instead of blowing up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .layers import Parameter


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    n_checked: int

    def worst(self) -> str:
        if not self.per_param:
            return "<no parameters>"
        name = max(self.per_param, key=self.per_param.get)
        return f"{name}: {self.per_param[name]:.3e}"


def grad_check(loss_fn: Callable[[], float], params: Sequence[Parameter],
               analytic: Sequence[np.ndarray], h: float = 1e-5,
               rel_floor: float = 1e-6) -> GradCheckReport:
    """Compare ``analytic`` gradients against central differences of ``loss_fn``.

    ``loss_fn`` must be a pure forward evaluation of the same loss the
    analytic gradients were computed for; parameters are restored after
    each probe.
    """
    per_param: dict[str, float] = {}
    worst = 0.0
    n_checked = 0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        errs = np.empty(flat.size)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn()
            flat[i] = keep - h
            down = loss_fn()
            flat[i] = keep
            fd = (up - down) / (2.0 * h)
            a = gflat[i]
            errs[i] = abs(a - fd) / max(abs(a), abs(fd), rel_floor)
        n_checked += flat.size
        per_param[p.name or f"param{len(per_param)}"] = float(errs.max())
        worst = max(worst, float(errs.max()))
    return GradCheckReport(max_rel_error=worst, per_param=per_param, n_checked=n_checked)
