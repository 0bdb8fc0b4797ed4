"""One JSON file configures every stage; sections map to the dataclasses.

Example::

    {
      "preprocess": {"downsample_factor": 2},
      "seg_model": {"encoder_blocks": [[8, 7, 2], [16, 7, 5], [32, 7, 5]],
                    "bottleneck_channels": 32},
      "optimizer": {"batch_size": 8},
      "sampler": {"wide_p": 0.15}
    }

Unknown sections or keys raise, so typos fail fast.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig, SamplerConfig
from .cls import ClsModelConfig
from .gbdt import GbdtConfig
from .metrics import MatchConfig
from .nn import OptimizerConfig
from .preprocess import PreprocessConfig
from .seg import PeakConfig, SegModelConfig


@dataclass
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    seg_model: SegModelConfig = field(default_factory=SegModelConfig)
    cls_model: ClsModelConfig = field(default_factory=ClsModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    peaks: PeakConfig = field(default_factory=PeakConfig)
    match: MatchConfig = field(default_factory=MatchConfig)


_TUPLE_KEYS = {"encoder_blocks", "decoder_blocks", "resample_range", "scale_range"}


def _apply(obj, section: str, values: dict):
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in values.items():
        if key not in names:
            raise ValueError(f"config section {section!r}: unknown key {key!r}")
        if key in _TUPLE_KEYS and value is not None:
            if key in ("encoder_blocks", "decoder_blocks"):
                value = tuple(tuple(v) for v in value)
            else:
                value = tuple(value)
        setattr(obj, key, value)


def load_config(path=None) -> PipelineConfig:
    config = PipelineConfig()
    if path is None:
        return config
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config root must be a JSON object")
    sections = {f.name: getattr(config, f.name) for f in dataclasses.fields(config)}
    for section, values in doc.items():
        if section not in sections:
            raise ValueError(f"{path}: unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ValueError(f"{path}: section {section!r} must be an object")
        _apply(sections[section], section, values)
    return config
