"""Shared fixtures: the desk-scale trained pipeline used by the slow tests.

Training happens once per session; everything downstream (stage tests,
acceptance suite) reuses the same checkpoints and corpora.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from holterbeat.augment import AugmentConfig, SamplerConfig
from holterbeat.cls import ClsModelConfig, classify_beats, train_classifier
from holterbeat.corpus import load_labeled_records, preprocess_labeled, synth_corpus
from holterbeat.gbdt import GbdtConfig, build_features, train_gbdt
from holterbeat.io import WIDE
from holterbeat.nn import OptimizerConfig
from holterbeat.preprocess import PreprocessConfig
from holterbeat.seg import PeakConfig, SegModelConfig, train_segmentation

# small nets and short schedules: full-size defaults follow the published
# protocol (100k steps) and are far beyond a test session
DESK_SEG = SegModelConfig(encoder_blocks=((8, 7, 2), (16, 7, 5), (32, 7, 5)),
                          bottleneck_channels=32)
DESK_CLS = ClsModelConfig(encoder_blocks=((8, 5, 2), (16, 5, 5), (32, 5, 5)),
                          merged_channels=32)
DESK_AUG = AugmentConfig(channel_dropout_p=0.4, dropout_noise_std=1.0,
                         gaussian_noise_std=0.15)
DESK_SAMPLER = SamplerConfig(wide_p=0.15)
SEG_STEPS = 700
CLS_STEPS = 1000


@dataclass
class DeskPipeline:
    root: Path
    train_dir: Path
    stack_dir: Path
    eval_dir: Path
    preprocess: PreprocessConfig
    peak: PeakConfig
    seg_model: object
    seg_log: list
    cls_model: object
    cls_log: list
    gbdt_model: object
    train_corpus: object
    val_corpus: object
    eval_corpus: object
    seg_ckpt: Path
    cls_ckpt: Path
    gbdt_path: Path


@pytest.fixture(scope="session")
def desk(tmp_path_factory) -> DeskPipeline:
    root = tmp_path_factory.mktemp("desk")
    train_dir = root / "train"
    stack_dir = root / "stack"
    eval_dir = root / "eval"
    # training corpus for the CNNs (20 records), stacking corpus unseen by
    # them, and the held-out evaluation corpus prescribed by the acceptance
    # suite: 20 records x 10 min, noise 0.1 mV, dropout segments present
    synth_corpus(train_dir, n_records=20, duration_s=180.0, seed=101,
                 noise_std_mv=0.08, wide_fraction=0.12, dropout_per_record=1.0)
    synth_corpus(stack_dir, n_records=6, duration_s=300.0, seed=555,
                 noise_std_mv=0.1, wide_fraction=0.12, dropout_per_record=1.0)
    synth_corpus(eval_dir, n_records=20, duration_s=600.0, seed=999,
                 noise_std_mv=0.1, wide_fraction=0.12, dropout_per_record=1.5)

    pp = PreprocessConfig()
    ids = sorted(p.stem for p in train_dir.glob("*.rec"))
    train_corpus = preprocess_labeled(load_labeled_records(train_dir, ids[:16]), pp)
    val_corpus = preprocess_labeled(load_labeled_records(train_dir, ids[16:]), pp)
    eval_corpus = preprocess_labeled(load_labeled_records(eval_dir), pp)

    opt_seg = OptimizerConfig(batch_size=8)
    seg_model, seg_log = train_segmentation(
        train_corpus, DESK_SEG, opt_seg, SEG_STEPS,
        sampler_config=DESK_SAMPLER, augment_config=DESK_AUG,
        val_corpus=val_corpus, peak_config=PeakConfig(), eval_every=300, seed=0)

    opt_cls = OptimizerConfig(lr=0.003, batch_size=16)
    cls_model, cls_log = train_classifier(
        train_corpus, DESK_CLS, opt_cls, CLS_STEPS,
        sampler_config=DESK_SAMPLER, augment_config=DESK_AUG,
        val_corpus=val_corpus, eval_every=250, seed=0)

    stack = preprocess_labeled(load_labeled_records(stack_dir), pp)

    def matrices(indices):
        xs, ys = [], []
        names = None
        for i in indices:
            rec, ann = stack.records[i], stack.annotations[i]
            descriptors = classify_beats(cls_model, rec, ann.positions)
            feats = build_features(descriptors, ann.positions, rec.fs)
            names = feats.columns
            xs.append(feats.values)
            ys.append((ann.labels == WIDE).astype(np.float64))
        return np.vstack(xs), np.concatenate(ys), names

    tx, ty, names = matrices([0, 1, 2, 3])
    vx, vy, _ = matrices([4, 5])
    gbdt_model = train_gbdt(tx, ty, vx, vy,
                            GbdtConfig(max_trees=300, max_depth=4,
                                       early_stopping_rounds=30),
                            feature_names=names)

    seg_ckpt = root / "seg.ckpt"
    cls_ckpt = root / "cls.ckpt"
    gbdt_path = root / "gbdt.json"
    seg_model.save(seg_ckpt, extra={"seed": 0, "steps": SEG_STEPS})
    cls_model.save(cls_ckpt, extra={"seed": 0, "steps": CLS_STEPS})
    from holterbeat.gbdt import save_gbdt

    save_gbdt(gbdt_model, gbdt_path)
    (root / "seg.ckpt.log.json").write_text(json.dumps(seg_log), encoding="utf-8")

    return DeskPipeline(root=root, train_dir=train_dir, stack_dir=stack_dir,
                        eval_dir=eval_dir, preprocess=pp, peak=PeakConfig(),
                        seg_model=seg_model, seg_log=seg_log,
                        cls_model=cls_model, cls_log=cls_log,
                        gbdt_model=gbdt_model,
                        train_corpus=train_corpus, val_corpus=val_corpus,
                        eval_corpus=eval_corpus,
                        seg_ckpt=seg_ckpt, cls_ckpt=cls_ckpt, gbdt_path=gbdt_path)


# acceptance tests register one line per criterion; print them at the end
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, name: str, passed: bool, detail: str = ""):
    ACCEPTANCE_LINES[number] = (name, passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        name, passed, detail = ACCEPTANCE_LINES[number]
        status = "PASS" if passed else ("SKIP" if passed is None else "FAIL")
        line = f"criterion {number}: {name}: {status}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
