"""Stage 1: beat-position segmentation.

Per-channel CNN encoders with identical layout but independent weights;
their feature maps are averaged before a shared bottleneck, a mirrored
decoder upsamples back to input length, and a sigmoid head emits a
per-sample beat probability. Inference tiles the record with 50 %
overlapping windows, averages probabilities where windows overlap, and
extracts peaks with a refractory distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .augment import AugmentConfig, BeatCorpus, SamplerConfig, WindowSampler, build_target_mask
from .io import BeatAnnotation, EcgRecord
from .nn import (AdamOptimizer, OptimizerConfig, Tensor, load_checkpoint, losses,
                 no_grad, ops, save_checkpoint)
from .nn.blocks import ConvBlock, he_normal

DEFAULT_ENCODER = ((16, 7, 2), (32, 7, 5), (64, 7, 5), (128, 7, 3))


@dataclass
class SegModelConfig:
    """Architecture knobs. ``encoder_blocks`` entries are (channels, kernel, pool).

    The product of the pool factors must divide the window sample count;
    with 30 s at 125 Hz (3750 samples = 2 * 3 * 5^4) the default pool
    schedule is (2, 5, 5, 3).
    """

    window_len_s: float = 30.0
    fs: float = 125.0
    n_channels: int = 2
    encoder_blocks: tuple = DEFAULT_ENCODER
    bottleneck_channels: int = 128
    decoder_blocks: tuple | None = None  # (channels, kernel, upsample); mirror if None
    head_kernel: int = 7
    use_skips: bool = False
    loss: str = "dice"
    dice_smooth: float = 1.0
    focal_gamma: float = 2.0

    @property
    def window_samples(self) -> int:
        return int(round(self.window_len_s * self.fs))

    def resolved_decoder(self) -> tuple:
        if self.decoder_blocks is not None:
            return tuple(tuple(b) for b in self.decoder_blocks)
        enc = list(self.encoder_blocks)
        dec = []
        for i in range(len(enc) - 1, -1, -1):
            channels = enc[i - 1][0] if i > 0 else enc[0][0]
            kernel = enc[i][1]
            dec.append((channels, kernel, enc[i][2]))
        return tuple(dec)

    def validate(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if not self.encoder_blocks:
            raise ValueError("need at least one encoder block")
        total_pool = 1
        for c, k, p in self.encoder_blocks:
            if c < 1 or k < 1 or p < 1:
                raise ValueError("encoder block entries must be positive")
            total_pool *= p
        if self.window_samples % total_pool != 0:
            raise ValueError(
                f"window of {self.window_samples} samples is not divisible by "
                f"the total pooling factor {total_pool}"
            )
        dec = self.resolved_decoder()
        up_total = 1
        for c, k, u in dec:
            up_total *= u
        if up_total != total_pool:
            raise ValueError("decoder upsampling must mirror the encoder pooling")
        if self.loss not in ("dice", "bce", "focal"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class PeakConfig:
    prob_threshold: float = 0.5
    min_distance_ms: float = 200.0

    def validate(self):
        if not (0.0 < self.prob_threshold < 1.0):
            raise ValueError("prob_threshold must be within (0, 1)")
        if self.min_distance_ms <= 0:
            raise ValueError("min_distance_ms must be positive")


class SegModel:
    """Dual-encoder encoder-decoder over [batch, n_ch, window] inputs."""

    def __init__(self, config: SegModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        enc = config.encoder_blocks
        self.encoders = []
        for _ in range(config.n_channels):
            blocks = []
            c_in = 1
            for c_out, kernel, pool in enc:
                blocks.append(ConvBlock(rng, c_in, c_out, kernel, pool))
                c_in = c_out
            self.encoders.append(blocks)
        self.bottleneck = ConvBlock(rng, enc[-1][0], config.bottleneck_channels,
                                    enc[-1][1], pool=1)
        self.decoder = []
        c_in = config.bottleneck_channels
        enc_channels = [b[0] for b in enc]  # channels at each encoder level
        for level, (c_out, kernel, up) in enumerate(config.resolved_decoder()):
            skip_ch = 0
            if config.use_skips:
                # after upsample the length matches encoder level n-2-level
                skip_level = len(enc) - 2 - level
                skip_ch = enc_channels[skip_level] if skip_level >= 0 else 0
            self.decoder.append((up, ConvBlock(rng, c_in + skip_ch, c_out, kernel, pool=1)))
            c_in = c_out
        self.head_w = Tensor(he_normal(rng, (1, c_in, config.head_kernel),
                                       c_in * config.head_kernel),
                             requires_grad=True)
        self.head_b = Tensor(np.zeros(1), requires_grad=True)

    def named_params(self) -> dict:
        params = {}
        for ei, blocks in enumerate(self.encoders):
            for bi, block in enumerate(blocks):
                params.update(block.named_params(f"enc{ei}.block{bi}"))
        params.update(self.bottleneck.named_params("bottleneck"))
        for di, (_, block) in enumerate(self.decoder):
            params.update(block.named_params(f"dec{di}"))
        params["head.w"] = self.head_w
        params["head.b"] = self.head_b
        return params

    def forward(self, x: np.ndarray) -> Tensor:
        """[batch, n_ch, w] -> per-sample probabilities [batch, w]."""
        if x.ndim != 3 or x.shape[1] != self.config.n_channels:
            raise ValueError(
                f"expected [batch, {self.config.n_channels}, window], got {x.shape}"
            )
        xt = Tensor(x)
        per_level: list[list[Tensor]] = [[] for _ in self.config.encoder_blocks]
        merged = []
        for ci, blocks in enumerate(self.encoders):
            h = Tensor(x[:, ci : ci + 1, :])
            for li, block in enumerate(blocks):
                h = block(h)
                per_level[li].append(h)
            merged.append(h)
        h = ops.mean_channels(merged)
        h = self.bottleneck(h)
        for level, (up, block) in enumerate(self.decoder):
            h = ops.upsample_nearest(h, up)
            if self.config.use_skips:
                skip_level = len(self.config.encoder_blocks) - 2 - level
                if skip_level >= 0:
                    skip = ops.mean_channels(per_level[skip_level])
                    h = ops.concat_channels(h, skip)
            h = block(h)
        logits = ops.conv1d(h, self.head_w, self.head_b, stride=1,
                            padding=self.config.head_kernel // 2)
        return ops.squeeze_channel(ops.sigmoid(logits))

    def loss_for(self, probs: Tensor, target: np.ndarray) -> Tensor:
        cfg = self.config
        if cfg.loss == "dice":
            return losses.dice_loss(probs, target, smooth=cfg.dice_smooth)
        if cfg.loss == "focal":
            return losses.focal_loss(probs, target, gamma=cfg.focal_gamma)
        return losses.bce_loss(probs, target)

    def save(self, path, extra: dict | None = None):
        save_checkpoint(path, kind="seg", config=asdict(self.config),
                        params=self.named_params(), extra=extra)

    @classmethod
    def load(cls, path) -> "SegModel":
        manifest, params = load_checkpoint(path)
        if manifest["kind"] != "seg":
            raise ValueError(f"{path} holds a {manifest['kind']!r} model, expected seg")
        cfg_dict = dict(manifest["config"])
        cfg_dict["encoder_blocks"] = tuple(tuple(b) for b in cfg_dict["encoder_blocks"])
        if cfg_dict.get("decoder_blocks") is not None:
            cfg_dict["decoder_blocks"] = tuple(tuple(b) for b in cfg_dict["decoder_blocks"])
        model = cls(SegModelConfig(**cfg_dict), seed=0)
        own = model.named_params()
        if set(own) != set(params):
            raise ValueError(f"{path}: checkpoint parameters do not match the config")
        for name, tensor in params.items():
            if own[name].data.shape != tensor.data.shape:
                raise ValueError(f"{path}: shape mismatch for {name}")
            own[name].data = tensor.data
        return model


def build_seg_model(config: SegModelConfig, seed: int = 0) -> SegModel:
    return SegModel(config, seed)


# ---------------------------------------------------------------------------
# Inference

def window_starts(n: int, window: int) -> list[int]:
    """50 %-overlap tiling; a shifted final window covers the tail exactly."""
    if n <= window:
        return [0]
    step = window // 2
    starts = list(range(0, n - window + 1, step))
    if starts[-1] != n - window:
        starts.append(n - window)
    return starts


def probability_trace(model: SegModel, record: EcgRecord,
                      batch_windows: int = 8) -> np.ndarray:
    """Merged per-sample beat probability for a preprocessed record."""
    from .preprocess import extract_window, normalize_window

    cfg = model.config
    if abs(record.fs - cfg.fs) > 1e-6:
        raise ValueError(
            f"record fs {record.fs} does not match model fs {cfg.fs}; "
            "run preprocessing first"
        )
    w = cfg.window_samples
    n = record.n_samples
    if n == 0:
        return np.zeros(0)
    starts = window_starts(n, w)
    prob_sum = np.zeros(max(n, w))
    count = np.zeros(max(n, w))
    with no_grad():
        for chunk_start in range(0, len(starts), batch_windows):
            chunk = starts[chunk_start : chunk_start + batch_windows]
            batch = np.stack([
                normalize_window(extract_window(record.channels, s, w)) for s in chunk
            ])
            probs = model.forward(batch).data
            for s, p in zip(chunk, probs):
                prob_sum[s : s + w] += p
                count[s : s + w] += 1.0
    trace = prob_sum[:n] / np.maximum(count[:n], 1.0)
    return trace


def peaks_from_trace(trace: np.ndarray, peak_config: PeakConfig, fs: float) -> np.ndarray:
    peak_config.validate()
    min_dist = max(int(round(peak_config.min_distance_ms / 1000.0 * fs)), 1)
    return kernels.local_peaks(np.ascontiguousarray(trace, dtype=np.float64),
                               peak_config.prob_threshold, min_dist)


def detect_beats(model: SegModel, record: EcgRecord,
                 peak_config: PeakConfig | None = None) -> BeatAnnotation:
    """Positions-only annotation at the record's (preprocessed) rate."""
    peak_config = peak_config or PeakConfig()
    trace = probability_trace(model, record)
    positions = peaks_from_trace(trace, peak_config, record.fs)
    return BeatAnnotation.positions_only(positions, record.fs)


# ---------------------------------------------------------------------------
# Training

def _detection_f(model, records, annotations, peak_config, tolerance_ms=150.0):
    """Micro-pooled (Se, +P) of the current model over validation records."""
    from .metrics import MatchConfig, match_beats

    tp = fp = fn = 0
    for rec, ann in zip(records, annotations):
        pred = detect_beats(model, rec, peak_config)
        res = match_beats(pred.positions, ann.positions,
                          MatchConfig(tolerance_ms=tolerance_ms), rec.fs)
        tp += res.tp
        fp += res.fp
        fn += res.fn
    se = tp / (tp + fn) if tp + fn else 0.0
    pp = tp / (tp + fp) if tp + fp else 0.0
    return se, pp


def train_segmentation(corpus: BeatCorpus, seg_config: SegModelConfig,
                       opt_config: OptimizerConfig, steps: int, *,
                       sampler_config: SamplerConfig | None = None,
                       augment_config: AugmentConfig | None = None,
                       val_corpus: BeatCorpus | None = None,
                       peak_config: PeakConfig | None = None,
                       eval_every: int = 200,
                       seed: int = 0,
                       log_every: int = 50,
                       progress=None,
                       init_model: "SegModel | None" = None):
    """Train with the Adam schedule; returns (model, log).

    The log is a list of dicts; validation entries carry micro Se/+P on
    ``val_corpus`` and the best-validation parameter snapshot is restored
    into the returned model. Passing ``init_model`` fine-tunes its weights
    instead of starting from a fresh init (its config must match).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps > opt_config.total_steps:
        raise ValueError("steps must not exceed the schedule's total_steps")
    if abs(corpus.fs - seg_config.fs) > 1e-6:
        raise ValueError(f"corpus fs {corpus.fs} != model fs {seg_config.fs}")
    opt_config.validate()
    sampler_config = sampler_config or SamplerConfig(seg_window_s=seg_config.window_len_s)
    augment_config = augment_config or AugmentConfig()
    peak_config = peak_config or PeakConfig()

    if init_model is not None:
        if init_model.config != seg_config:
            raise ValueError("init_model config does not match seg_config")
        model = init_model
    else:
        model = SegModel(seg_config, seed=seed)
    params = model.named_params()
    optimizer = AdamOptimizer(params, opt_config)
    sampler = WindowSampler(corpus, "segmentation", sampler_config, augment_config,
                            seed=seed + 1)

    log = []
    best = None  # (se + pp, snapshot)
    for step in range(steps):
        x, y = sampler.sample_batch(opt_config.batch_size)
        optimizer.zero_grad(params)
        probs = model.forward(x)
        loss = model.loss_for(probs, y)
        loss.backward()
        optimizer.step(params, step)
        if step % log_every == 0 or step == steps - 1:
            entry = {"step": step, "loss": loss.item()}
            log.append(entry)
            if progress is not None:
                progress(entry)
        if val_corpus is not None and ((step + 1) % eval_every == 0 or step == steps - 1):
            se, pp = _detection_f(model, val_corpus.records, val_corpus.annotations,
                                  peak_config)
            entry = {"step": step, "loss": loss.item(), "val_se": se, "val_pp": pp}
            log.append(entry)
            if progress is not None:
                progress(entry)
            score = se + pp
            if best is None or score > best[0]:
                best = (score, {k: v.data.copy() for k, v in params.items()})
    if best is not None:
        for name, data in best[1].items():
            params[name].data = data
    return model, log
