"""Adaptive-moment optimizer for the tensor parameters of a model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphStateError
from .tensor import Tensor


@dataclass
class OptimizerState:
    """Per-parameter moment accumulators plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Adam with bias correction; ``step`` consumes and zeroes gradients."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.state.m = [np.zeros_like(p.data) for p in self.params]
        self.state.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise GraphStateError(
                    f"parameter {i} has no gradient; run backward first")
        s = self.state
        s.step_count += 1
        c1 = 1.0 - s.beta1 ** s.step_count
        c2 = 1.0 - s.beta2 ** s.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g
            s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g
            m_hat = s.m[i] / c1
            v_hat = s.v[i] / c2
            p.data -= s.lr * m_hat / (np.sqrt(v_hat) + s.eps)
            p.grad = None


def optimizer_step(optimizer: Adam) -> None:
    """Functional alias for ``Adam.step``."""
    optimizer.step()
