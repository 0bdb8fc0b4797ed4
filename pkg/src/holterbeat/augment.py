"""Training-time augmentations and the class-balanced window sampler.

All randomness flows through one ``numpy.random.Generator`` owned by the
sampler, so a fixed seed reproduces batches bit-exactly. Augmentations
operate on already-normalized windows and never change window shape.
Order inside ``sample_window``: channel dropout -> additive noise ->
resample -> per-channel scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .io import BeatAnnotation, EcgRecord, WIDE
from .preprocess import extract_window, normalize_window

logger = logging.getLogger(__name__)

MASK_HALF_WIDTH_S = 0.05  # target mask is 1 within +-50 ms of a beat center


@dataclass
class AugmentConfig:
    channel_dropout_p: float = 0.9
    dropout_noise_std: float = 1.0
    gaussian_noise_std: float = 0.1
    resample_range: tuple = (0.7, 1.3)
    scale_range: tuple = (0.5, 1.5)

    def validate(self):
        if not (0.0 <= self.channel_dropout_p <= 1.0):
            raise ValueError("channel_dropout_p must be within [0, 1]")
        if self.dropout_noise_std < 0 or self.gaussian_noise_std < 0:
            raise ValueError("noise stds must be non-negative")
        for name, rng_pair in (("resample_range", self.resample_range),
                               ("scale_range", self.scale_range)):
            lo, hi = rng_pair
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be ordered and positive")


@dataclass
class SamplerConfig:
    wide_p: float = 0.15
    seg_window_s: float = 30.0
    cls_window_s: float = 2.0

    def validate(self):
        if not (0.0 <= self.wide_p <= 1.0):
            raise ValueError("wide_p must be within [0, 1]")
        if self.seg_window_s <= 0 or self.cls_window_s <= 0:
            raise ValueError("window lengths must be positive")


def channel_dropout(window: np.ndarray, rng: np.random.Generator,
                    config: AugmentConfig) -> np.ndarray:
    """With probability ``channel_dropout_p`` replace one channel by noise.

    Single-channel windows pass through untouched: there is no spare
    channel to learn from.
    """
    out = np.array(window, dtype=np.float64)
    if out.shape[0] < 2:
        return out
    if rng.random() < config.channel_dropout_p:
        ch = int(rng.integers(out.shape[0]))
        out[ch] = rng.normal(0.0, config.dropout_noise_std, out.shape[1])
    return out


def add_noise(window: np.ndarray, rng: np.random.Generator,
              config: AugmentConfig) -> np.ndarray:
    out = np.array(window, dtype=np.float64)
    if config.gaussian_noise_std > 0:
        out += rng.normal(0.0, config.gaussian_noise_std, out.shape)
    return out


def resample_window(window: np.ndarray, positions: np.ndarray,
                    factor: float) -> tuple[np.ndarray, np.ndarray]:
    """Stretch the time axis by ``factor``; keep the original length.

    Output sample i comes from input position i / factor (linear
    interpolation); samples past the stretched end are zero. Beat positions
    scale by the factor; any pushed outside the window are dropped.
    """
    n_ch, n = window.shape
    src = np.arange(n, dtype=np.float64) / factor
    out = np.zeros_like(window)
    valid = src <= n - 1
    for c in range(n_ch):
        out[c, valid] = np.interp(src[valid], np.arange(n, dtype=np.float64), window[c])
    new_pos = np.round(np.asarray(positions, dtype=np.float64) * factor).astype(np.int64)
    new_pos = new_pos[(new_pos >= 0) & (new_pos < n) & valid[np.clip(new_pos, 0, n - 1)]]
    return out, new_pos


def random_resample(window: np.ndarray, positions: np.ndarray,
                    rng: np.random.Generator, config: AugmentConfig):
    lo, hi = config.resample_range
    factor = rng.uniform(lo, hi)
    return resample_window(window, positions, factor)


def random_scale(window: np.ndarray, rng: np.random.Generator,
                 config: AugmentConfig) -> np.ndarray:
    lo, hi = config.scale_range
    factors = rng.uniform(lo, hi, window.shape[0])
    return window * factors[:, None]


def build_target_mask(n: int, positions: np.ndarray, fs: float) -> np.ndarray:
    """Box mask, 1 within +-50 ms of each beat center, clipped at edges."""
    half = int(round(MASK_HALF_WIDTH_S * fs))
    mask = np.zeros(n)
    for p in positions:
        mask[max(p - half, 0) : min(p + half + 1, n)] = 1.0
    return mask


@dataclass
class BeatCorpus:
    """Preprocessed records with annotations, indexed by beat class.

    Positions must already live at the records' sampling rate (i.e. after
    preprocessing the caller rescaled them).
    """

    records: list
    annotations: list
    _wide_index: np.ndarray = field(init=False, repr=False)
    _narrow_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.records) != len(self.annotations):
            raise ValueError("records and annotations must pair up")
        if not self.records:
            raise ValueError("corpus is empty")
        fs = self.records[0].fs
        wide, narrow = [], []
        for ri, (rec, ann) in enumerate(zip(self.records, self.annotations)):
            if abs(rec.fs - fs) > 1e-9:
                raise ValueError("all corpus records must share one sampling rate")
            if abs(ann.fs_ref - rec.fs) > 1e-9:
                raise ValueError(
                    f"annotation fs_ref {ann.fs_ref} != record fs {rec.fs}"
                )
            for bi, lab in enumerate(ann.labels):
                (wide if lab == WIDE else narrow).append((ri, bi))
        self._wide_index = np.asarray(wide, dtype=np.int64).reshape(-1, 2)
        self._narrow_index = np.asarray(narrow, dtype=np.int64).reshape(-1, 2)

    @property
    def fs(self) -> float:
        return self.records[0].fs

    @property
    def n_wide(self) -> int:
        return self._wide_index.shape[0]

    @property
    def n_narrow(self) -> int:
        return self._narrow_index.shape[0]

    def beat(self, ri: int, bi: int):
        ann = self.annotations[ri]
        return self.records[ri], int(ann.positions[bi]), str(ann.labels[bi])


class WindowSampler:
    """Draws augmented training windows, wide beats with probability wide_p."""

    def __init__(self, corpus: BeatCorpus, kind: str,
                 sampler_config: SamplerConfig, augment_config: AugmentConfig,
                 seed: int):
        if kind not in ("segmentation", "classification"):
            raise ValueError(f"unknown sampler kind {kind!r}")
        sampler_config.validate()
        augment_config.validate()
        self.corpus = corpus
        self.kind = kind
        self.scfg = sampler_config
        self.acfg = augment_config
        self.rng = np.random.default_rng(seed)
        self._warned_no_wide = False
        if kind == "segmentation":
            self.window_len = int(round(sampler_config.seg_window_s * corpus.fs))
        else:
            self.window_len = int(round(sampler_config.cls_window_s * corpus.fs))

    def _pick_beat(self):
        want_wide = self.rng.random() < self.scfg.wide_p
        if want_wide and self.corpus.n_wide == 0:
            if not self._warned_no_wide:
                logger.warning("sampler: corpus has no wide beats, sampling narrow only")
                self._warned_no_wide = True
            want_wide = False
        index = self.corpus._wide_index if want_wide else self.corpus._narrow_index
        if index.shape[0] == 0:
            raise ValueError("corpus has no beats of the requested class")
        ri, bi = index[int(self.rng.integers(index.shape[0]))]
        return int(ri), int(bi)

    def sample(self):
        """One (window [n_ch, w], target) draw.

        Segmentation target: per-sample box mask. Classification target:
        1.0 for wide, 0.0 for narrow.
        """
        ri, bi = self._pick_beat()
        record, pos, label = self.corpus.beat(ri, bi)
        fs = self.corpus.fs
        w = self.window_len
        n = record.n_samples
        ann = self.corpus.annotations[ri]

        if self.kind == "segmentation":
            lo = max(pos - w + 1, 0)
            hi = min(pos, max(n - w, 0))
            start = int(self.rng.integers(lo, hi + 1)) if hi > lo else lo
            window = extract_window(record.channels, start, w)
            in_win = ann.positions[(ann.positions >= start) & (ann.positions < start + w)]
            rel_pos = (in_win - start).astype(np.int64)
        else:
            start = pos - w // 2
            window = extract_window(record.channels, start, w)
            rel_pos = np.array([w // 2], dtype=np.int64)

        window = normalize_window(window)
        window = channel_dropout(window, self.rng, self.acfg)
        window = add_noise(window, self.rng, self.acfg)
        window, rel_pos = random_resample(window, rel_pos, self.rng, self.acfg)
        window = random_scale(window, self.rng, self.acfg)

        if self.kind == "segmentation":
            return window, build_target_mask(w, rel_pos, fs)
        return window, (1.0 if label == WIDE else 0.0)

    def sample_batch(self, batch_size: int):
        """Stacked batch: (x [b, n_ch, w], targets)."""
        windows, targets = [], []
        for _ in range(batch_size):
            win, tgt = self.sample()
            windows.append(win)
            targets.append(tgt)
        x = np.stack(windows)
        y = np.stack(targets) if self.kind == "segmentation" else np.asarray(targets)
        return x, y


def sample_window(corpus: BeatCorpus, kind: str, rng_seed: int,
                  sampler_config: SamplerConfig | None = None,
                  augment_config: AugmentConfig | None = None):
    """One-shot convenience wrapper around :class:`WindowSampler`."""
    sampler = WindowSampler(corpus, kind,
                            sampler_config or SamplerConfig(),
                            augment_config or AugmentConfig(),
                            seed=rng_seed)
    return sampler.sample()
