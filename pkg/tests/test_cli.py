"""CLI surface: subcommands, exit codes, artifact determinism.

Training here uses a micro config (6 s windows, 2-block nets, tens of
steps) so each command finishes in seconds; quality is covered elsewhere.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from holterbeat.io import encode_212, read_annotations, read_record

MICRO_CONFIG = {
    "seg_model": {"window_len_s": 6.0, "encoder_blocks": [[4, 5, 3], [8, 5, 5]],
                  "bottleneck_channels": 8, "head_kernel": 5},
    "cls_model": {"encoder_blocks": [[4, 5, 2], [8, 5, 5], [8, 5, 5]],
                  "merged_channels": 8},
    "optimizer": {"batch_size": 2},
    "sampler": {"seg_window_s": 6.0},
    "gbdt": {"max_trees": 10, "max_depth": 2, "min_samples_leaf": 5,
             "early_stopping_rounds": 5},
}


def run_cli(*args, check=True):
    proc = subprocess.run([sys.executable, "-m", "holterbeat.cli", *map(str, args)],
                          capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"CLI failed: {proc.returncode}\n{proc.stdout}\n{proc.stderr}")
    return proc


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(MICRO_CONFIG))
    corpus = root / "corpus"
    run_cli("synth", "--out", corpus, "--n-records", 6, "--duration-s", 60,
            "--seed", 5, "--noise-std", 0.05)
    return root, config, corpus


def test_synth_writes_pairs(workspace):
    root, config, corpus = workspace
    recs = sorted(corpus.glob("*.rec"))
    anns = sorted(corpus.glob("*.ann"))
    assert len(recs) == 6 and len(anns) == 6
    record = read_record(recs[0])
    assert record.fs == 250.0
    ann = read_annotations(anns[0], fs_ref=250.0)
    assert len(ann) > 30


def test_preprocess_command(workspace, tmp_path):
    root, config, corpus = workspace
    out = tmp_path / "p.rec"
    run_cli("preprocess", "--record", corpus / "rec000.rec", "--out", out,
            "--config", config)
    processed = read_record(out)
    assert processed.fs == 125.0


def test_import_mitbih_command(tmp_path):
    samples = np.random.default_rng(0).integers(-500, 500, size=(2, 300)).astype(np.int16)
    dat = tmp_path / "x.dat"
    dat.write_bytes(encode_212(samples))
    sidecar = tmp_path / "x.json"
    sidecar.write_text(json.dumps({"fs": 360, "gain": [200, 200],
                                   "baseline": [0, 0]}))
    out = tmp_path / "x.rec"
    run_cli("import-mitbih", "--dat", dat, "--sidecar", sidecar, "--out", out)
    rec = read_record(out)
    assert rec.fs == 360.0
    assert rec.n_samples == 300
    assert np.allclose(rec.channels[0], samples[0] / 200.0, atol=1e-6)


def test_full_cli_flow_and_determinism(workspace, tmp_path):
    root, config, corpus = workspace
    seg1, seg2 = tmp_path / "seg1.ckpt", tmp_path / "seg2.ckpt"
    cls1, cls2 = tmp_path / "cls1.ckpt", tmp_path / "cls2.ckpt"
    gb1, gb2 = tmp_path / "g1.json", tmp_path / "g2.json"

    for out in (seg1, seg2):
        run_cli("train-seg", "--corpus", corpus, "--steps", 12, "--seed", 3,
                "--config", config, "--out", out, "--eval-every", 6)
    assert seg1.read_bytes() == seg2.read_bytes()
    assert (tmp_path / "seg1.ckpt.log.json").read_bytes() == \
           (tmp_path / "seg2.ckpt.log.json").read_bytes()

    for out in (cls1, cls2):
        run_cli("train-cls", "--corpus", corpus, "--steps", 12, "--seed", 3,
                "--config", config, "--out", out, "--eval-every", 6)
    assert cls1.read_bytes() == cls2.read_bytes()

    for out in (gb1, gb2):
        run_cli("train-gbdt", "--corpus", corpus, "--cls-ckpt", cls1,
                "--seed", 3, "--config", config, "--out", out)
    assert gb1.read_bytes() == gb2.read_bytes()

    # detect / classify / run / eval
    record = corpus / "rec000.rec"
    truth = corpus / "rec000.ann"
    det1, det2 = tmp_path / "d1.ann", tmp_path / "d2.ann"
    for out in (det1, det2):
        run_cli("detect", "--record", record, "--seg-ckpt", seg1, "--out", out,
                "--config", config)
    assert det1.read_bytes() == det2.read_bytes()

    run_cli("detect", "--record", record, "--pan-tompkins", "--out",
            tmp_path / "pt.ann", "--config", config)
    pt = read_annotations(tmp_path / "pt.ann", fs_ref=250.0)
    assert len(pt) > 30  # the classical detector works without training

    desc = tmp_path / "desc.csv"
    run_cli("classify", "--record", record, "--cls-ckpt", cls1,
            "--positions", truth, "--out", desc, "--config", config)
    n_truth = len(read_annotations(truth, fs_ref=250.0))
    assert len(desc.read_text().splitlines()) == n_truth + 1

    runs = []
    for tag in ("r1", "r2"):
        out = tmp_path / f"{tag}.ann"
        rep = tmp_path / f"{tag}.json"
        proc = run_cli("run", "--record", record, "--seg-ckpt", seg1,
                       "--cls-ckpt", cls1, "--gbdt", gb1, "--truth", truth,
                       "--report", rep, "--out", out, "--config", config)
        assert "Detection R-peaks" in proc.stdout
        runs.append((out.read_bytes(), rep.read_bytes()))
    assert runs[0] == runs[1]

    report_path = tmp_path / "eval.json"
    run_cli("eval", "--pred", det1, "--truth", truth, "--fs", 250,
            "--out", report_path, "--config", config)
    report = json.loads(report_path.read_text())
    assert "aggregate" in report


def test_cli_error_exit_codes(workspace, tmp_path):
    root, config, corpus = workspace
    proc = run_cli("detect", "--record", corpus / "missing.rec",
                   "--pan-tompkins", "--out", tmp_path / "x.ann", check=False)
    assert proc.returncode == 2
    assert "error" in proc.stderr.lower()

    proc = run_cli("detect", "--record", corpus / "rec000.rec",
                   "--out", tmp_path / "y.ann", check=False)
    assert proc.returncode == 2  # no --seg-ckpt and no --pan-tompkins

    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"nonsense": {}}))
    proc = run_cli("preprocess", "--record", corpus / "rec000.rec",
                   "--out", tmp_path / "z.rec", "--config", bad_cfg, check=False)
    assert proc.returncode == 2
    assert "section" in proc.stderr


def test_gradcheck_command(tmp_path):
    out = tmp_path / "g.json"
    proc = run_cli("gradcheck", "--out", out)
    assert "all gradient checks passed" in proc.stdout
    doc = json.loads(out.read_text())
    assert all(v["passed"] for v in doc.values())


def test_version_flag():
    proc = run_cli("--version")
    assert proc.stdout.strip()
