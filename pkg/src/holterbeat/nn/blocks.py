"""Reusable conv blocks and weight init shared by the two CNN stages."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor


def he_normal(rng, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)


class ConvBlock:
    """conv(k, same padding) -> channel_norm -> relu -> optional maxpool."""

    def __init__(self, rng, c_in: int, c_out: int, kernel: int, pool: int = 1):
        if kernel % 2 == 0:
            raise ValueError("conv kernels must be odd for same-length padding")
        self.kernel = kernel
        self.pool = pool
        self.w = Tensor(he_normal(rng, (c_out, c_in, kernel), c_in * kernel),
                        requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.gamma = Tensor(np.ones(c_out), requires_grad=True)
        self.beta = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        h = ops.conv1d(x, self.w, self.b, stride=1, padding=self.kernel // 2)
        h = ops.channel_norm(h, self.gamma, self.beta)
        h = ops.relu(h)
        if self.pool > 1:
            h = ops.maxpool1d(h, self.pool, self.pool)
        return h

    def named_params(self, prefix: str):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta


class DenseHead:
    """Affine map for the classifier output."""

    def __init__(self, rng, f_in: int, f_out: int):
        self.w = Tensor(he_normal(rng, (f_in, f_out), f_in), requires_grad=True)
        self.b = Tensor(np.zeros(f_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.dense(x, self.w, self.b)

    def named_params(self, prefix: str):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b
