"""Adaptive-moment optimizer operating on a ParamSet."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.param_name = name


@dataclass
class OptimizerState:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(opt: OptimizerState, params: ParamSet) -> ParamSet:
    """One bias-corrected Adam update of every trainable entry; zeroes gradients."""
    for name, t in params.trainable():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise NonFiniteGradient(name)
    opt.step += 1
    c1 = 1.0 - opt.beta1**opt.step
    c2 = 1.0 - opt.beta2**opt.step
    for name, t in params.trainable():
        g = t.grad
        if g is None:
            g = np.zeros_like(t.data)
        m = opt.first_moment.get(name)
        v = opt.second_moment.get(name)
        if m is None:
            m = np.zeros_like(t.data)
            v = np.zeros_like(t.data)
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g
        opt.first_moment[name] = m
        opt.second_moment[name] = v
        if opt.learning_rate != 0.0:
            t.data = t.data - opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    params.zero_grad()
    return params
