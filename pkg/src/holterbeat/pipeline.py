"""End-to-end composition: preprocess -> detect -> classify -> stack.

Positions in the emitted annotation are mapped back to the input record's
sampling rate so they line up with the raw file; evaluation against a
supplied truth annotation happens in that time base too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cls import ClsModel, classify_beats
from .config import PipelineConfig
from .gbdt import GbdtModel, build_features, gbdt_predict
from .io import BeatAnnotation, EcgRecord, NARROW, WIDE
from .metrics import (EvalReport, RecordEval, classification_counts, match_beats)
from .preprocess import preprocess_record
from .seg import SegModel, detect_beats

WIDE_PROB_THRESHOLD = 0.5


@dataclass
class PipelineModels:
    seg: SegModel
    cls: ClsModel
    gbdt: GbdtModel | None = None  # None -> labels straight from the classifier


def run_pipeline(record: EcgRecord, models: PipelineModels,
                 config: PipelineConfig,
                 truth: BeatAnnotation | None = None):
    """Returns (BeatAnnotation at the input rate, EvalReport or None)."""
    processed = preprocess_record(record, config.preprocess)
    if abs(processed.fs - models.seg.config.fs) > 1e-6:
        raise ValueError(
            f"preprocessed fs {processed.fs} does not match the segmentation "
            f"checkpoint fs {models.seg.config.fs}"
        )
    detected = detect_beats(models.seg, processed, config.peaks)
    positions = detected.positions

    if positions.size:
        descriptors = classify_beats(models.cls, processed, positions)
        if models.gbdt is not None:
            feats = build_features(descriptors, positions, processed.fs)
            if feats.values.shape[1] != models.gbdt.n_features:
                raise ValueError(
                    f"feature width {feats.values.shape[1]} does not match the "
                    f"GBDT model ({models.gbdt.n_features}); embedding dims differ?"
                )
            probs = gbdt_predict(models.gbdt, feats.values)
        else:
            probs = np.asarray([d.prob_wide for d in descriptors])
        labels = np.where(probs >= WIDE_PROB_THRESHOLD, WIDE, NARROW).astype("<U1")
    else:
        labels = np.zeros(0, dtype="<U1")

    factor = config.preprocess.downsample_factor
    raw_positions = positions * factor
    annotation = BeatAnnotation(raw_positions, labels, fs_ref=record.fs)

    report = None
    if truth is not None:
        report = evaluate_annotation(annotation, truth, record.record_id,
                                     config.match.tolerance_ms)
    return annotation, report


def evaluate_annotation(pred: BeatAnnotation, truth: BeatAnnotation,
                        record_id: str, tolerance_ms: float) -> EvalReport:
    """Detection + wide-classification report for one record."""
    if abs(pred.fs_ref - truth.fs_ref) > 1e-9:
        raise ValueError(
            f"annotation rates differ: pred {pred.fs_ref}, truth {truth.fs_ref}"
        )
    from .metrics import MatchConfig

    res = match_beats(pred.positions, truth.positions,
                      MatchConfig(tolerance_ms=tolerance_ms), pred.fs_ref)
    counts = classification_counts(res.pairs, pred.labels, truth.labels)
    report = EvalReport(tolerance_ms=tolerance_ms)
    report.add(RecordEval(record_id=record_id,
                          det_tp=res.tp, det_fp=res.fp, det_fn=res.fn,
                          cls_tp=counts.tp, cls_fp=counts.fp, cls_fn=counts.fn))
    return report
