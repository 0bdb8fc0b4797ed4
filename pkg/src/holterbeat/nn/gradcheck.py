"""Finite-difference verification of every backward pass.

``grad_check`` compares analytic gradients of a scalar-producing callable
against central differences, coordinate by coordinate. The standard suite
covers each layer primitive and loss at small random shapes and is also
wired to the ``gradcheck`` CLI subcommand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses, ops
from .tensor import Tensor

DEFAULT_STEP = 1e-4
NONLINEAR_TOL = 1e-4
LINEAR_TOL = 1e-8
_REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict = field(default_factory=dict)
    tolerance: float = NONLINEAR_TOL

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err < self.tolerance)


def grad_check(build_loss, params: dict, step: float = DEFAULT_STEP,
               tolerance: float = NONLINEAR_TOL) -> GradCheckReport:
    """Check d(build_loss())/d(param) for every coordinate of every param.

    ``build_loss`` must be deterministic and re-evaluable (it is called
    2 * n_coordinates + 1 times).
    """
    for t in params.values():
        t.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in params.items()}

    per_param = {}
    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = build_loss().item()
            flat[i] = orig - step
            f_minus = build_loss().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic[name].reshape(-1)[i]
            denom = max(abs(a), abs(numeric), _REL_FLOOR)
            err = max(err, abs(a - numeric) / denom)
        per_param[name] = float(err)
        worst = max(worst, err)
    return GradCheckReport(max_rel_err=float(worst), per_param=per_param,
                           tolerance=tolerance)


def _rng_tensor(rng, shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, shape), requires_grad=True)


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """Deterministic scalar projection so every output coordinate matters."""
    w = Tensor(weights)

    def backward(g):
        if out.requires_grad:
            out.accumulate_grad(float(g) * w.data)

    from .tensor import make_result

    return make_result(np.sum(out.data * w.data), (out, w), backward)


def standard_gradcheck_suite(seed: int = 0) -> dict:
    """Name -> GradCheckReport for every op and loss at random small shapes."""
    rng = np.random.default_rng(seed)
    reports = {}

    # conv1d (linear in each argument)
    x = _rng_tensor(rng, (2, 3, 17))
    w = _rng_tensor(rng, (4, 3, 5))
    b = _rng_tensor(rng, (4,))
    proj = rng.normal(0.0, 1.0, (2, 4, 17))
    reports["conv1d"] = grad_check(
        lambda: _weighted_sum(ops.conv1d(x, w, b, stride=1, padding=2), proj),
        {"x": x, "w": w, "b": b}, tolerance=LINEAR_TOL)

    xs = _rng_tensor(rng, (1, 2, 16))
    ws = _rng_tensor(rng, (3, 2, 3))
    bs = _rng_tensor(rng, (3,))
    proj = rng.normal(0.0, 1.0, (1, 3, 7))
    reports["conv1d_strided"] = grad_check(
        lambda: _weighted_sum(ops.conv1d(xs, ws, bs, stride=2, padding=0), proj),
        {"x": xs, "w": ws, "b": bs}, tolerance=LINEAR_TOL)

    # pooling / upsampling (piecewise linear; ties have measure zero)
    xp = _rng_tensor(rng, (2, 3, 12))
    proj = rng.normal(0.0, 1.0, (2, 3, 6))
    reports["maxpool1d"] = grad_check(
        lambda: _weighted_sum(ops.maxpool1d(xp, 2, 2), proj),
        {"x": xp}, tolerance=NONLINEAR_TOL)
    reports["avgpool1d"] = grad_check(
        lambda: _weighted_sum(ops.avgpool1d(xp, 2, 2), proj),
        {"x": xp}, tolerance=LINEAR_TOL)
    proj = rng.normal(0.0, 1.0, (2, 3, 24))
    reports["upsample_nearest"] = grad_check(
        lambda: _weighted_sum(ops.upsample_nearest(xp, 2), proj),
        {"x": xp}, tolerance=LINEAR_TOL)

    # activations / normalization
    xa = _rng_tensor(rng, (2, 4, 9))
    proj = rng.normal(0.0, 1.0, (2, 4, 9))
    reports["relu"] = grad_check(
        lambda: _weighted_sum(ops.relu(xa), proj), {"x": xa})
    reports["sigmoid"] = grad_check(
        lambda: _weighted_sum(ops.sigmoid(xa), proj), {"x": xa})

    xn = _rng_tensor(rng, (2, 3, 11))
    gamma = Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True)
    beta = _rng_tensor(rng, (3,))
    proj = rng.normal(0.0, 1.0, (2, 3, 11))
    reports["channel_norm"] = grad_check(
        lambda: _weighted_sum(ops.channel_norm(xn, gamma, beta), proj),
        {"x": xn, "gamma": gamma, "beta": beta})

    # dense head
    xd = _rng_tensor(rng, (3, 6))
    wd = _rng_tensor(rng, (6, 2))
    bd = _rng_tensor(rng, (2,))
    proj = rng.normal(0.0, 1.0, (3, 2))
    reports["dense"] = grad_check(
        lambda: _weighted_sum(ops.dense(xd, wd, bd), proj),
        {"x": xd, "w": wd, "b": bd}, tolerance=LINEAR_TOL)

    xg = _rng_tensor(rng, (2, 5, 8))
    proj = rng.normal(0.0, 1.0, (2, 5))
    reports["global_avg_pool"] = grad_check(
        lambda: _weighted_sum(ops.global_avg_pool(xg), proj),
        {"x": xg}, tolerance=LINEAR_TOL)

    # losses: raw scores pushed through sigmoid keep p far from the clamp
    raw = _rng_tensor(rng, (40,))
    y = (rng.random(40) < 0.4).astype(np.float64)
    reports["bce_loss"] = grad_check(
        lambda: losses.bce_loss(ops.sigmoid(raw), y), {"raw": raw})
    reports["focal_loss"] = grad_check(
        lambda: losses.focal_loss(ops.sigmoid(raw), y, gamma=2.0), {"raw": raw})
    reports["dice_loss"] = grad_check(
        lambda: losses.dice_loss(ops.sigmoid(raw), y, smooth=1.0), {"raw": raw})

    # small end-to-end stack: conv -> norm -> relu -> pool -> dense -> bce
    xe = _rng_tensor(rng, (2, 2, 12))
    we = _rng_tensor(rng, (3, 2, 3), scale=0.7)
    be = _rng_tensor(rng, (3,))
    ge = Tensor(np.ones(3), requires_grad=True)
    bte = _rng_tensor(rng, (3,))
    wde = _rng_tensor(rng, (3, 1), scale=0.7)
    bde = _rng_tensor(rng, (1,))
    ye = np.array([1.0, 0.0])

    def stack_loss():
        h = ops.conv1d(xe, we, be, stride=1, padding=1)
        h = ops.channel_norm(h, ge, bte)
        h = ops.relu(h)
        h = ops.maxpool1d(h, 2, 2)
        h = ops.global_avg_pool(h)
        logit = ops.flatten_vector(ops.dense(h, wde, bde))
        return losses.bce_loss(ops.sigmoid(logit), ye)

    reports["stack"] = grad_check(
        stack_loss,
        {"x": xe, "w": we, "b": be, "gamma": ge, "beta": bte, "wd": wde, "bd": bde})

    return reports
