"""Adam with bias correction over named Parameter collections."""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter
from .kernels import adam_ops


class Adam:
    """Tracks first/second moments per parameter; step() consumes .grad."""

    def __init__(self, params: list[Parameter], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names passed to Adam")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        """One update over every parameter that received a gradient."""
        self.step_count += 1
        for p in self.params:
            if p.grad is None:
                continue
            g = np.ascontiguousarray(p.grad, dtype=np.float64)
            flat_p = p.data.reshape(-1)
            adam_ops.adam_update(
                flat_p, g.reshape(-1),
                self.m[p.name].reshape(-1), self.v[p.name].reshape(-1),
                self.step_count, self.lr, self.beta1, self.beta2, self.eps,
            )
