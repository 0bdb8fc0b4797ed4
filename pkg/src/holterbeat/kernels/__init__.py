"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

See :mod:`holterbeat.backend` for how the path is chosen. The public
names below always point at the active backend.
"""

from .. import backend
from . import numpy_impl

BACKEND = backend.resolve_backend()

if BACKEND == "numba":
    from . import numba_impl as _impl
else:
    _impl = numpy_impl

conv1d_forward = _impl.conv1d_forward
conv1d_backward_input = _impl.conv1d_backward_input
conv1d_backward_weights = _impl.conv1d_backward_weights
maxpool1d_forward = _impl.maxpool1d_forward
maxpool1d_backward = _impl.maxpool1d_backward
avgpool1d_forward = _impl.avgpool1d_forward
avgpool1d_backward = _impl.avgpool1d_backward
moving_mean = _impl.moving_mean
local_peaks = _impl.local_peaks
histogram_gh = _impl.histogram_gh
predict_forest = _impl.predict_forest

__all__ = [
    "BACKEND",
    "conv1d_forward",
    "conv1d_backward_input",
    "conv1d_backward_weights",
    "maxpool1d_forward",
    "maxpool1d_backward",
    "avgpool1d_forward",
    "avgpool1d_backward",
    "moving_mean",
    "local_peaks",
    "histogram_gh",
    "predict_forest",
]
