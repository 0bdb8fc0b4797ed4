"""Command-line surface tying the stages together.

Subcommands: synth, import-mitbih, preprocess, train-seg, train-cls,
train-gbdt, detect, classify, run, eval, gradcheck. Every subcommand
accepts --seed, --config (JSON with all module configs) and --out. Exit
code 0 on success, 2 on a diagnosed error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cls import (ClsModel, classify_beats, descriptors_to_csv, train_classifier)
from .config import load_config
from .corpus import (load_labeled_records, preprocess_labeled, split_ids,
                     synth_corpus, corpus_ids)
from .gbdt import build_features, gbdt_predict, load_gbdt, save_gbdt, train_gbdt
from .io import (BeatAnnotation, MitBih212Header, import_mitbih_212,
                 read_annotations, read_record, write_annotations, write_record)
from .metrics import EvalReport
from .nn.gradcheck import standard_gradcheck_suite
from .pan_tompkins import detect_pan_tompkins
from .pipeline import PipelineModels, evaluate_annotation, run_pipeline
from .preprocess import preprocess_record
from .seg import SegModel, detect_beats, train_segmentation


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="master RNG seed")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with module configs")
    parser.add_argument("--out", type=Path, required=True, help="output path")


def _progress_printer(prefix):
    def show(entry):
        parts = [f"{prefix} step {entry['step']}", f"loss {entry['loss']:.4f}"]
        for key in ("val_se", "val_pp", "val_acc"):
            if key in entry:
                parts.append(f"{key} {entry[key]:.4f}")
        print("  " + " | ".join(parts))
    return show


def cmd_synth(args):
    ids = synth_corpus(args.out, n_records=args.n_records,
                       duration_s=args.duration_s, seed=args.seed,
                       mean_hr_bpm=args.mean_hr, wide_fraction=args.wide_fraction,
                       noise_std_mv=args.noise_std,
                       dropout_per_record=args.dropout_per_record)
    print(f"wrote {len(ids)} records to {args.out}")
    return 0


def cmd_import_mitbih(args):
    if args.sidecar is not None:
        header = MitBih212Header.from_json(args.sidecar)
    else:
        if args.fs is None or args.gain is None or args.baseline is None:
            raise ValueError("--fs, --gain and --baseline (or --sidecar) are required")
        header = MitBih212Header(
            fs=args.fs,
            gain=tuple(float(v) for v in args.gain.split(",")),
            baseline=tuple(int(v) for v in args.baseline.split(",")),
        )
    record = import_mitbih_212(args.dat, header)
    write_record(record, args.out)
    print(f"imported {record.record_id}: {record.n_channels} ch x "
          f"{record.n_samples} samples at {record.fs} Hz")
    return 0


def cmd_preprocess(args):
    cfg = load_config(args.config)
    record = read_record(args.record)
    processed = preprocess_record(record, cfg.preprocess)
    write_record(processed, args.out)
    print(f"preprocessed {record.record_id}: fs {record.fs} -> {processed.fs}")
    return 0


def _load_corpora(args, cfg, val_fraction):
    ids = corpus_ids(args.corpus)
    train_ids, val_ids = split_ids(ids, val_fraction, seed=args.seed)
    if not train_ids:
        raise ValueError("validation split left no training records")
    train = preprocess_labeled(load_labeled_records(args.corpus, train_ids),
                               cfg.preprocess)
    val = None
    if val_ids:
        val = preprocess_labeled(load_labeled_records(args.corpus, val_ids),
                                 cfg.preprocess)
    return train, val


def cmd_train_seg(args):
    cfg = load_config(args.config)
    train, val = _load_corpora(args, cfg, args.val_fraction)
    model, log = train_segmentation(
        train, cfg.seg_model, cfg.optimizer, args.steps,
        sampler_config=cfg.sampler, augment_config=cfg.augment,
        val_corpus=val, peak_config=cfg.peaks, eval_every=args.eval_every,
        seed=args.seed, progress=_progress_printer("train-seg") if args.verbose else None)
    model.save(args.out, extra={"seed": args.seed, "steps": args.steps})
    Path(str(args.out) + ".log.json").write_text(json.dumps(log), encoding="utf-8")
    print(f"saved segmentation checkpoint to {args.out}")
    return 0


def cmd_train_cls(args):
    cfg = load_config(args.config)
    train, val = _load_corpora(args, cfg, args.val_fraction)
    model, log = train_classifier(
        train, cfg.cls_model, cfg.optimizer, args.steps,
        sampler_config=cfg.sampler, augment_config=cfg.augment,
        val_corpus=val, eval_every=args.eval_every,
        seed=args.seed, progress=_progress_printer("train-cls") if args.verbose else None)
    model.save(args.out, extra={"seed": args.seed, "steps": args.steps})
    Path(str(args.out) + ".log.json").write_text(json.dumps(log), encoding="utf-8")
    print(f"saved classifier checkpoint to {args.out}")
    return 0


def cmd_train_gbdt(args):
    cfg = load_config(args.config)
    cls_model = ClsModel.load(args.cls_ckpt)
    ids = corpus_ids(args.corpus)
    train_ids, valid_ids = split_ids(ids, 1.0 - args.train_fraction, seed=args.seed)
    if not train_ids or not valid_ids:
        raise ValueError("GBDT needs both a train and a validation split")

    def matrices(record_ids):
        xs, ys = [], []
        names = None
        corpus = preprocess_labeled(load_labeled_records(args.corpus, record_ids),
                                    cfg.preprocess)
        for rec, ann in zip(corpus.records, corpus.annotations):
            descriptors = classify_beats(cls_model, rec, ann.positions)
            feats = build_features(descriptors, ann.positions, rec.fs)
            names = feats.columns
            xs.append(feats.values)
            ys.append((ann.labels == "W").astype(np.float64))
        return np.vstack(xs), np.concatenate(ys), names

    train_x, train_y, names = matrices(train_ids)
    valid_x, valid_y, _ = matrices(valid_ids)
    model = train_gbdt(train_x, train_y, valid_x, valid_y, cfg.gbdt,
                       feature_names=names)
    save_gbdt(model, args.out)
    Path(str(args.out) + ".log.json").write_text(json.dumps(model.train_log),
                                                 encoding="utf-8")
    print(f"saved GBDT ({len(model.trees)} trees, best iteration "
          f"{model.best_iteration}) to {args.out}")
    return 0


def cmd_detect(args):
    cfg = load_config(args.config)
    record = read_record(args.record)
    processed = preprocess_record(record, cfg.preprocess)
    factor = cfg.preprocess.downsample_factor
    if args.pan_tompkins:
        ann = detect_pan_tompkins(processed)
    else:
        if args.seg_ckpt is None:
            raise ValueError("detect needs --seg-ckpt (or --pan-tompkins)")
        model = SegModel.load(args.seg_ckpt)
        ann = detect_beats(model, processed, cfg.peaks)
    out_ann = BeatAnnotation.positions_only(ann.positions * factor, record.fs)
    write_annotations(out_ann, args.out)
    print(f"detected {len(out_ann)} beats in {record.record_id}")
    return 0


def cmd_classify(args):
    cfg = load_config(args.config)
    record = read_record(args.record)
    model = ClsModel.load(args.cls_ckpt)
    truth = read_annotations(args.positions, fs_ref=record.fs)
    processed = preprocess_record(record, cfg.preprocess)
    factor = cfg.preprocess.downsample_factor
    positions = np.round(truth.positions / factor).astype(np.int64)
    descriptors = classify_beats(model, processed, positions)
    descriptors_to_csv(descriptors, args.out)
    print(f"classified {len(descriptors)} beats from {record.record_id}")
    return 0


def cmd_run(args):
    cfg = load_config(args.config)
    record = read_record(args.record)
    models = PipelineModels(
        seg=SegModel.load(args.seg_ckpt),
        cls=ClsModel.load(args.cls_ckpt),
        gbdt=load_gbdt(args.gbdt) if args.gbdt else None,
    )
    truth = read_annotations(args.truth, fs_ref=record.fs) if args.truth else None
    annotation, report = run_pipeline(record, models, cfg, truth=truth)
    write_annotations(annotation, args.out)
    print(f"{record.record_id}: {len(annotation)} beats "
          f"({int(np.sum(annotation.wide_mask))} wide)")
    if report is not None:
        print(report.render_table())
        if args.report:
            report.to_json(args.report)
    return 0


def cmd_eval(args):
    cfg = load_config(args.config)
    pred = read_annotations(args.pred, fs_ref=args.fs)
    truth = read_annotations(args.truth, fs_ref=args.fs)
    report = evaluate_annotation(pred, truth, record_id=Path(args.pred).stem,
                                 tolerance_ms=cfg.match.tolerance_ms)
    print(report.render_table())
    report.to_json(args.out)
    return 0


def cmd_gradcheck(args):
    reports = standard_gradcheck_suite(seed=args.seed)
    worst = 0.0
    failed = []
    lines = {}
    for name, rep in reports.items():
        status = "PASS" if rep.passed else "FAIL"
        print(f"{name:20s} {status}  max_rel_err={rep.max_rel_err:.3e}  "
              f"tol={rep.tolerance:.0e}")
        lines[name] = {"max_rel_err": rep.max_rel_err, "tolerance": rep.tolerance,
                       "passed": rep.passed}
        worst = max(worst, rep.max_rel_err)
        if not rep.passed:
            failed.append(name)
    if args.out:
        Path(args.out).write_text(json.dumps(lines, sort_keys=True, indent=2),
                                  encoding="utf-8")
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}")
        return 1
    print(f"all gradient checks passed (worst {worst:.3e})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="holterbeat",
        description="Beat detection and wide/narrow classification for 2-lead ECG",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    _add_common(p)
    p.add_argument("--n-records", type=int, default=20)
    p.add_argument("--duration-s", type=float, default=600.0)
    p.add_argument("--mean-hr", type=float, default=70.0)
    p.add_argument("--wide-fraction", type=float, default=0.12)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--dropout-per-record", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import-mitbih", help="convert a format-212 .dat file")
    _add_common(p)
    p.add_argument("--dat", type=Path, required=True)
    p.add_argument("--sidecar", type=Path, default=None,
                   help="JSON with fs, gain[2], baseline[2]")
    p.add_argument("--fs", type=float, default=None)
    p.add_argument("--gain", type=str, default=None, help="e.g. 200,200")
    p.add_argument("--baseline", type=str, default=None, help="e.g. 1024,1024")
    p.set_defaults(func=cmd_import_mitbih)

    p = sub.add_parser("preprocess", help="run the noise-reduction chain")
    _add_common(p)
    p.add_argument("--record", type=Path, required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train-seg", help="train the segmentation network")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--eval-every", type=int, default=200)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("train-cls", help="train the wide/narrow classifier")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--eval-every", type=int, default=200)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train_cls)

    p = sub.add_parser("train-gbdt", help="train the stacking GBDT")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True,
                   help="held-out records unseen by the CNNs")
    p.add_argument("--cls-ckpt", type=Path, required=True)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.set_defaults(func=cmd_train_gbdt)

    p = sub.add_parser("detect", help="beat positions for one record")
    _add_common(p)
    p.add_argument("--record", type=Path, required=True)
    p.add_argument("--seg-ckpt", type=Path, default=None)
    p.add_argument("--pan-tompkins", action="store_true",
                   help="use the classical detector instead of the network")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("classify", help="beat descriptors at given positions")
    _add_common(p)
    p.add_argument("--record", type=Path, required=True)
    p.add_argument("--cls-ckpt", type=Path, required=True)
    p.add_argument("--positions", type=Path, required=True,
                   help="annotation CSV at the raw record rate")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("run", help="full three-stage pipeline")
    _add_common(p)
    p.add_argument("--record", type=Path, required=True)
    p.add_argument("--seg-ckpt", type=Path, required=True)
    p.add_argument("--cls-ckpt", type=Path, required=True)
    p.add_argument("--gbdt", type=Path, default=None)
    p.add_argument("--truth", type=Path, default=None)
    p.add_argument("--report", type=Path, default=None,
                   help="write the JSON evaluation report here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a prediction against truth")
    _add_common(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--fs", type=float, required=True,
                   help="sampling rate the annotation indices refer to")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"holterbeat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
