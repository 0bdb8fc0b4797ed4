"""Stage 2: wide/narrow classification of 2-second beat-centered windows.

Same dual-encoder idea as the segmentation net but with a classification
head: per-channel encoders, averaged feature maps, one post-merge conv
block, global average pooling into the beat embedding, and a dense layer
to a single logit. The embedding (the pooled vector right after the
channel-merge block) plus the logit feed the stacking stage.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, BeatCorpus, SamplerConfig, WindowSampler
from .io import BeatAnnotation, EcgRecord, FormatError, NARROW, WIDE
from .nn import (AdamOptimizer, OptimizerConfig, Tensor, load_checkpoint, losses,
                 no_grad, ops, save_checkpoint)
from .nn.blocks import ConvBlock, DenseHead
from .preprocess import extract_window, normalize_window

DEFAULT_CLS_ENCODER = ((16, 5, 2), (32, 5, 5), (64, 5, 5))


@dataclass
class ClsModelConfig:
    """(channels, kernel, pool) encoder blocks; pools must divide the window."""

    window_len_s: float = 2.0
    fs: float = 125.0
    n_channels: int = 2
    encoder_blocks: tuple = DEFAULT_CLS_ENCODER
    merged_channels: int = 64
    merged_kernel: int = 5

    @property
    def window_samples(self) -> int:
        return int(round(self.window_len_s * self.fs))

    @property
    def embedding_dim(self) -> int:
        return self.merged_channels

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


@dataclass
class BeatDescriptor:
    """Stage-2 output for one beat, consumed by the stacking stage."""

    position: int
    prob_wide: float
    logit: float
    embedding: np.ndarray

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)


class ClsModel:
    def __init__(self, config: ClsModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        self.encoders = []
        for _ in range(config.n_channels):
            blocks = []
            c_in = 1
            for c_out, kernel, pool in config.encoder_blocks:
                blocks.append(ConvBlock(rng, c_in, c_out, kernel, pool))
                c_in = c_out
            self.encoders.append(blocks)
        self.merge_block = ConvBlock(rng, config.encoder_blocks[-1][0],
                                     config.merged_channels, config.merged_kernel,
                                     pool=1)
        self.head = DenseHead(rng, config.merged_channels, 1)

    def named_params(self) -> dict:
        params = {}
        for ei, blocks in enumerate(self.encoders):
            for bi, block in enumerate(blocks):
                params.update(block.named_params(f"enc{ei}.block{bi}"))
        params.update(self.merge_block.named_params("merge"))
        params.update(self.head.named_params("head"))
        return params

    def forward(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        """[batch, n_ch, w] -> (logits [batch], embeddings [batch, d])."""
        if x.ndim != 3 or x.shape[1] != self.config.n_channels:
            raise ValueError(
                f"expected [batch, {self.config.n_channels}, window], got {x.shape}"
            )
        merged = []
        for ci, blocks in enumerate(self.encoders):
            h = Tensor(x[:, ci : ci + 1, :])
            for block in blocks:
                h = block(h)
            merged.append(h)
        h = ops.mean_channels(merged)
        h = self.merge_block(h)
        embedding = ops.global_avg_pool(h)
        logit = ops.flatten_vector(self.head(embedding))
        return logit, embedding

    def save(self, path, extra: dict | None = None):
        save_checkpoint(path, kind="cls", config=asdict(self.config),
                        params=self.named_params(), extra=extra)

    @classmethod
    def load(cls, path) -> "ClsModel":
        manifest, params = load_checkpoint(path)
        if manifest["kind"] != "cls":
            raise ValueError(f"{path} holds a {manifest['kind']!r} model, expected cls")
        cfg_dict = dict(manifest["config"])
        cfg_dict["encoder_blocks"] = tuple(tuple(b) for b in cfg_dict["encoder_blocks"])
        model = cls(ClsModelConfig(**cfg_dict), seed=0)
        own = model.named_params()
        if set(own) != set(params):
            raise ValueError(f"{path}: checkpoint parameters do not match the config")
        for name, tensor in params.items():
            if own[name].data.shape != tensor.data.shape:
                raise ValueError(f"{path}: shape mismatch for {name}")
            own[name].data = tensor.data
        return model


def _sigmoid_scalar(v: float) -> float:
    if v >= 0:
        return float(1.0 / (1.0 + np.exp(-v)))
    e = np.exp(v)
    return float(e / (1.0 + e))


def extract_beat_window(record: EcgRecord, position: int,
                        window_len_s: float = 2.0) -> np.ndarray:
    """Normalized [n_ch, w] window centered on ``position``, zero-padded at edges."""
    w = int(round(window_len_s * record.fs))
    start = int(position) - w // 2
    return normalize_window(extract_window(record.channels, start, w))


def classify_beats(model: ClsModel, record: EcgRecord, positions,
                   batch_size: int = 64) -> list[BeatDescriptor]:
    """One descriptor per position, in position order. Pure function."""
    cfg = model.config
    if abs(record.fs - cfg.fs) > 1e-6:
        raise ValueError(
            f"record fs {record.fs} does not match model fs {cfg.fs}; "
            "run preprocessing first"
        )
    positions = np.asarray(positions, dtype=np.int64)
    out: list[BeatDescriptor] = []
    with no_grad():
        for lo in range(0, positions.size, batch_size):
            chunk = positions[lo : lo + batch_size]
            batch = np.stack([
                extract_beat_window(record, p, cfg.window_len_s) for p in chunk
            ])
            logits, embeddings = model.forward(batch)
            for p, logit, emb in zip(chunk, logits.data, embeddings.data):
                logit = float(logit)
                out.append(BeatDescriptor(position=int(p),
                                          prob_wide=_sigmoid_scalar(logit),
                                          logit=logit,
                                          embedding=emb.copy()))
    return out


def descriptors_to_csv(descriptors: list[BeatDescriptor], path) -> None:
    """CSV dump: position, logit, prob_wide, e_0..e_{d-1}."""
    lines = []
    if descriptors:
        d = descriptors[0].embedding.size
        header = "position,logit,prob_wide," + ",".join(f"e_{i}" for i in range(d))
        lines.append(header)
        for desc in descriptors:
            emb = ",".join(repr(float(v)) for v in desc.embedding)
            lines.append(f"{desc.position},{float(desc.logit)!r},"
                         f"{float(desc.prob_wide)!r},{emb}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def descriptors_from_csv(path) -> list[BeatDescriptor]:
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return []
    lines = text.splitlines()
    header = lines[0].split(",")
    if header[:3] != ["position", "logit", "prob_wide"]:
        raise FormatError(f"{path}: not a descriptor CSV")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        out.append(BeatDescriptor(
            position=int(parts[0]),
            logit=float(parts[1]),
            prob_wide=float(parts[2]),
            embedding=np.asarray([float(v) for v in parts[3:]], dtype=np.float64),
        ))
    return out


def predict_labels(descriptors: list[BeatDescriptor], threshold: float = 0.5) -> np.ndarray:
    return np.asarray([WIDE if d.prob_wide >= threshold else NARROW
                       for d in descriptors], dtype="<U1")


def train_classifier(corpus: BeatCorpus, cls_config: ClsModelConfig,
                     opt_config: OptimizerConfig, steps: int, *,
                     sampler_config: SamplerConfig | None = None,
                     augment_config: AugmentConfig | None = None,
                     val_corpus: BeatCorpus | None = None,
                     eval_every: int = 200,
                     seed: int = 0,
                     log_every: int = 50,
                     progress=None):
    """BCE-trained classifier; best-validation-accuracy snapshot returned."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps > opt_config.total_steps:
        raise ValueError("steps must not exceed the schedule's total_steps")
    if corpus.n_wide == 0 or corpus.n_narrow == 0:
        raise ValueError("classifier training needs both wide and narrow beats")
    if abs(corpus.fs - cls_config.fs) > 1e-6:
        raise ValueError(f"corpus fs {corpus.fs} != model fs {cls_config.fs}")
    opt_config.validate()
    sampler_config = sampler_config or SamplerConfig(cls_window_s=cls_config.window_len_s)
    augment_config = augment_config or AugmentConfig()

    model = ClsModel(cls_config, seed=seed)
    params = model.named_params()
    optimizer = AdamOptimizer(params, opt_config)
    sampler = WindowSampler(corpus, "classification", sampler_config, augment_config,
                            seed=seed + 1)

    log = []
    best = None
    for step in range(steps):
        x, y = sampler.sample_batch(opt_config.batch_size)
        optimizer.zero_grad(params)
        logits, _ = model.forward(x)
        loss = losses.bce_loss(ops.sigmoid(logits), y)
        loss.backward()
        optimizer.step(params, step)
        if step % log_every == 0 or step == steps - 1:
            entry = {"step": step, "loss": loss.item()}
            log.append(entry)
            if progress is not None:
                progress(entry)
        if val_corpus is not None and ((step + 1) % eval_every == 0 or step == steps - 1):
            acc = validation_accuracy(model, val_corpus)
            entry = {"step": step, "loss": loss.item(), "val_acc": acc}
            log.append(entry)
            if progress is not None:
                progress(entry)
            if best is None or acc > best[0]:
                best = (acc, {k: v.data.copy() for k, v in params.items()})
    if best is not None:
        for name, data in best[1].items():
            params[name].data = data
    return model, log


def validation_accuracy(model: ClsModel, corpus: BeatCorpus) -> float:
    """Accuracy over every annotated beat of the corpus (true positions)."""
    correct = 0
    total = 0
    for rec, ann in zip(corpus.records, corpus.annotations):
        descriptors = classify_beats(model, rec, ann.positions)
        labels = predict_labels(descriptors)
        correct += int(np.sum(labels == ann.labels))
        total += len(ann)
    return correct / total if total else 0.0
