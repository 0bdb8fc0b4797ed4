"""Corpus directory handling and synthetic corpus generation.

A corpus directory holds ``<id>.rec`` / ``<id>.ann`` pairs (project record
and annotation formats). Loading preprocesses each record and rescales the
annotation into the decimated time base, producing the ``BeatCorpus`` the
trainers consume.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .augment import BeatCorpus
from .io import (BeatAnnotation, SynthConfig, generate_synthetic, read_annotations,
                 read_record, write_annotations, write_record)
from .preprocess import PreprocessConfig, preprocess_record, rescale_positions


def corpus_ids(directory) -> list:
    directory = Path(directory)
    ids = sorted(p.stem for p in directory.glob("*.rec"))
    if not ids:
        raise FileNotFoundError(f"no .rec files in {directory}")
    missing = [i for i in ids if not (directory / f"{i}.ann").exists()]
    if missing:
        raise FileNotFoundError(f"records without annotations: {missing}")
    return ids


def load_labeled_records(directory, ids=None):
    """[(record, annotation)] at the raw rate, sorted by id."""
    directory = Path(directory)
    out = []
    for rid in ids if ids is not None else corpus_ids(directory):
        record = read_record(directory / f"{rid}.rec")
        ann = read_annotations(directory / f"{rid}.ann", fs_ref=record.fs)
        out.append((record, ann))
    return out


def preprocess_labeled(pairs, config: PreprocessConfig) -> BeatCorpus:
    """Preprocess records and move annotations into the decimated time base."""
    records, annotations = [], []
    for record, ann in pairs:
        processed = preprocess_record(record, config)
        positions = rescale_positions(ann.positions, config.downsample_factor)
        records.append(processed)
        annotations.append(BeatAnnotation(positions, ann.labels.copy(),
                                          fs_ref=processed.fs))
    return BeatCorpus(records=records, annotations=annotations)


def split_ids(ids, holdout_fraction: float, seed: int):
    """Deterministic shuffle split -> (kept, held_out)."""
    ids = list(ids)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_hold = int(round(holdout_fraction * len(ids)))
    held = sorted(ids[i] for i in order[:n_hold])
    kept = sorted(ids[i] for i in order[n_hold:])
    return kept, held


def synth_corpus(directory, n_records: int, duration_s: float, seed: int, *,
                 mean_hr_bpm: float = 70.0, hr_spread_bpm: float = 20.0,
                 hr_jitter: float = 0.08, wide_fraction: float = 0.12,
                 noise_std_mv: float = 0.05, dropout_per_record: float = 1.0,
                 fs: float = 250.0) -> list:
    """Write a labeled synthetic corpus; per-record settings drawn from ``seed``.

    Each record draws its own heart rate and (in expectation)
    ``dropout_per_record`` zeroed-out channel segments of 5-20 s, mimicking
    electrode disconnections.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    master = np.random.default_rng(seed)
    ids = []
    for k in range(n_records):
        rec_seed = int(master.integers(2**31))
        rng = np.random.default_rng(rec_seed)
        hr = mean_hr_bpm + rng.uniform(-hr_spread_bpm, hr_spread_bpm)
        segments = []
        n_seg = rng.poisson(dropout_per_record)
        for _ in range(n_seg):
            length = rng.uniform(5.0, min(20.0, duration_s / 3.0))
            start = rng.uniform(0.0, duration_s - length)
            channel = int(rng.integers(2))
            segments.append((channel, float(start), float(start + length)))
        config = SynthConfig(duration_s=duration_s, mean_hr_bpm=float(hr),
                             hr_jitter=hr_jitter, wide_fraction=wide_fraction,
                             noise_std_mv=noise_std_mv,
                             dropout_segments=segments, seed=rec_seed, fs=fs)
        record, ann = generate_synthetic(config)
        rid = f"rec{k:03d}"
        record.record_id = rid
        write_record(record, directory / f"{rid}.rec")
        write_annotations(ann, directory / f"{rid}.ann")
        ids.append(rid)
    return ids
