"""Adam with bias correction and stepped exponential learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OptimizerConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_factor: float = 0.97
    decay_every: int = 1000
    total_steps: int = 100_000
    batch_size: int = 64

    def validate(self):
        if not (self.lr > 0):
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must be within [0, 1)")
        if self.decay_every < 1 or self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("decay_every, batch_size, total_steps must be >= 1")


def effective_lr(config: OptimizerConfig, step_index: int) -> float:
    """Learning rate at a 0-based step: lr * decay^(step // decay_every)."""
    return config.lr * config.decay_factor ** (step_index // config.decay_every)


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              step_index: int, config: OptimizerConfig) -> None:
    """One in-place Adam update of a single parameter array.

    ``m`` and ``v`` are the running first/second moment buffers (zeros
    before the first call); ``step_index`` is 0-based.
    """
    t = step_index + 1
    lr = effective_lr(config, step_index)
    m *= config.beta1
    m += (1.0 - config.beta1) * grad
    v *= config.beta2
    v += (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + config.eps)


class AdamOptimizer:
    """Moment state for a named parameter dict; applies ``adam_step`` per tensor."""

    def __init__(self, params: dict, config: OptimizerConfig):
        config.validate()
        self.config = config
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, params: dict, step_index: int) -> None:
        for name, tensor in params.items():
            if tensor.grad is None:
                continue
            adam_step(tensor.data, tensor.grad, self._m[name], self._v[name],
                      step_index, self.config)

    def zero_grad(self, params: dict) -> None:
        for tensor in params.values():
            tensor.zero_grad()
