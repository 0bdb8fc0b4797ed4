"""Minimal reverse-mode autodiff over dense float64 arrays.

Only what the two CNN stages need: 1-D convolution, pooling,
nearest-neighbor upsampling, relu/sigmoid, per-channel normalization, a
dense head, the three training losses, and Adam with step decay. Training
math runs at 64-bit; checkpoints store parameters as float32.
"""

from .tensor import Tensor, no_grad
from . import ops, losses
from .optim import OptimizerConfig, AdamOptimizer, adam_step, effective_lr
from .gradcheck import GradCheckReport, grad_check, standard_gradcheck_suite
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Tensor",
    "no_grad",
    "ops",
    "losses",
    "OptimizerConfig",
    "AdamOptimizer",
    "adam_step",
    "effective_lr",
    "GradCheckReport",
    "grad_check",
    "standard_gradcheck_suite",
    "save_checkpoint",
    "load_checkpoint",
]
