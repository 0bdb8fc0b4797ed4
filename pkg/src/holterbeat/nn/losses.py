"""Training losses: binary cross entropy, focal, and soft Dice.

All three take probabilities (already sigmoid-ed) and 0/1 targets of the
same shape and return a scalar tensor. Probabilities are clamped to
[1e-7, 1 - 1e-7] before any log; the clamp passes gradient through inside
the bounds and blocks it outside.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, make_result

PROB_CLAMP = 1e-7


def _prep(p: Tensor, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    yd = np.asarray(y, dtype=np.float64)
    if yd.shape != p.data.shape:
        raise ValueError(f"loss: shape mismatch p{p.data.shape} vs y{yd.shape}")
    pc = np.clip(p.data, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (p.data > PROB_CLAMP) & (p.data < 1.0 - PROB_CLAMP)
    return pc, yd, inside


def bce_loss(p: Tensor, y) -> Tensor:
    pc, yd, inside = _prep(p, y)
    n = pc.size
    value = -np.sum(yd * np.log(pc) + (1.0 - yd) * np.log1p(-pc)) / n

    def backward(g):
        if p.requires_grad:
            dp = -(yd / pc - (1.0 - yd) / (1.0 - pc)) / n
            p.accumulate_grad(float(g) * dp * inside)

    return make_result(value, (p,), backward)


def focal_loss(p: Tensor, y, gamma: float = 2.0) -> Tensor:
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    pc, yd, inside = _prep(p, y)
    n = pc.size
    one_m = 1.0 - pc
    value = -np.sum(yd * one_m**gamma * np.log(pc)
                    + (1.0 - yd) * pc**gamma * np.log1p(-pc)) / n

    def backward(g):
        if p.requires_grad:
            if gamma == 0.0:
                dp = -(yd / pc - (1.0 - yd) / one_m)
            else:
                dp = -(yd * (one_m**gamma / pc - gamma * one_m ** (gamma - 1.0) * np.log(pc))
                       + (1.0 - yd) * (gamma * pc ** (gamma - 1.0) * np.log1p(-pc)
                                       - pc**gamma / one_m))
            p.accumulate_grad(float(g) * dp / n * inside)

    return make_result(value, (p,), backward)


def dice_loss(p: Tensor, y, smooth: float = 1.0) -> Tensor:
    if smooth <= 0:
        raise ValueError("smooth must be positive")
    yd = np.asarray(y, dtype=np.float64)
    if yd.shape != p.data.shape:
        raise ValueError(f"loss: shape mismatch p{p.data.shape} vs y{yd.shape}")
    pd = p.data
    inter = float(np.sum(pd * yd))
    total = float(np.sum(pd) + np.sum(yd))
    value = 1.0 - (2.0 * inter + smooth) / (total + smooth)

    def backward(g):
        if p.requires_grad:
            denom = (total + smooth) ** 2
            dp = -(2.0 * yd * (total + smooth) - (2.0 * inter + smooth)) / denom
            p.accumulate_grad(float(g) * dp)

    return make_result(value, (p,), backward)


def constant_prediction_dice(mask_density: float, smooth: float, n: int,
                             prob: float = 0.5) -> float:
    """Dice loss of an everywhere-``prob`` predictor on a mask of given density.

    Analytic sanity baseline for the first training step.
    """
    pos = mask_density * n
    return 1.0 - (2.0 * prob * pos + smooth) / (prob * n + pos + smooth)
