"""Beat detection, wide/narrow QRS classification, and patient-wise stacking
for long-term two-lead ECG recordings.

The pipeline has three stages: an encoder-decoder segmentation network that
marks beat positions, a per-beat classification network that separates wide
from narrow QRS complexes, and a gradient-boosted tree model stacked on top
of the network outputs plus patient-level features.
"""

__version__ = "0.1.0"

from .io import BeatAnnotation, EcgRecord, SynthConfig, generate_synthetic

__all__ = [
    "BeatAnnotation",
    "EcgRecord",
    "SynthConfig",
    "generate_synthetic",
    "__version__",
]
