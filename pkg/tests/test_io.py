"""Record/annotation formats, format-212 decoding, synthetic generator."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holterbeat.io import (BeatAnnotation, EcgRecord, FormatError, MitBih212Header,
                           NARROW, SynthConfig, WIDE, decode_212, encode_212,
                           generate_synthetic, import_mitbih_212, read_annotations,
                           read_record, write_annotations, write_record)


# ---------------------------------------------------------------------------
# project record format

def test_record_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    rec = EcgRecord(rng.normal(size=(2, 257)).astype(np.float32), fs=250.0,
                    record_id="rt")
    path = tmp_path / "a.rec"
    write_record(rec, path)
    back = read_record(path)
    assert back.record_id == "rt"
    assert back.fs == 250.0
    assert back.channels.dtype == np.float32
    assert np.array_equal(back.channels, rec.channels)


def test_record_round_trip_single_channel(tmp_path):
    rec = EcgRecord(np.array([[0.0, 1.0, -1.0, 0.5]], dtype=np.float32), fs=100.0)
    path = tmp_path / "b.rec"
    write_record(rec, path)
    payload = path.read_bytes().split(b"\n", 1)[1]
    assert payload == np.array([0, 1, -1, 0.5], dtype="<f4").tobytes()
    assert np.array_equal(read_record(path).channels, rec.channels)


def test_record_empty_samples(tmp_path):
    rec = EcgRecord(np.zeros((2, 0), dtype=np.float32), fs=250.0)
    path = tmp_path / "c.rec"
    write_record(rec, path)
    back = read_record(path)
    assert back.n_samples == 0
    assert back.n_channels == 2


def test_record_unequal_channels_rejected():
    with pytest.raises(ValueError):
        EcgRecord(np.array([[1.0, 2.0], [3.0]], dtype=object), fs=1.0)


def test_record_payload_length_mismatch(tmp_path):
    header = {"record_id": "x", "fs": 250.0, "n_channels": 2, "n_samples": 10}
    path = tmp_path / "bad.rec"
    path.write_bytes(json.dumps(header).encode() + b"\n" + b"\x00" * (19 * 4))
    with pytest.raises(FormatError, match="payload"):
        read_record(path)


def test_record_invalid_fs(tmp_path):
    header = {"record_id": "x", "fs": 0, "n_channels": 1, "n_samples": 0}
    path = tmp_path / "bad2.rec"
    path.write_bytes(json.dumps(header).encode() + b"\n")
    with pytest.raises(FormatError, match="fs"):
        read_record(path)


def test_record_missing_header_field(tmp_path):
    path = tmp_path / "bad3.rec"
    path.write_bytes(b'{"fs": 250}\n')
    with pytest.raises(FormatError, match="missing"):
        read_record(path)


@settings(max_examples=25, deadline=None)
@given(n_ch=st.integers(1, 3), n=st.integers(0, 64), seed=st.integers(0, 2**31))
def test_record_round_trip_property(tmp_path_factory, n_ch, n, seed):
    rng = np.random.default_rng(seed)
    rec = EcgRecord(rng.normal(size=(n_ch, n)).astype(np.float32), fs=125.0)
    path = tmp_path_factory.mktemp("prop") / "r.rec"
    write_record(rec, path)
    back = read_record(path)
    assert np.array_equal(back.channels, rec.channels)
    assert back.fs == rec.fs


# ---------------------------------------------------------------------------
# annotation CSV

def test_annotation_basic_parse(tmp_path):
    path = tmp_path / "a.ann"
    path.write_text("100,N\n350,W\n")
    ann = read_annotations(path, fs_ref=250.0)
    assert ann.positions.tolist() == [100, 350]
    assert ann.labels.tolist() == [NARROW, WIDE]


def test_annotation_ordering_error(tmp_path):
    path = tmp_path / "b.ann"
    path.write_text("350,N\n100,N\n")
    with pytest.raises(FormatError, match="increasing"):
        read_annotations(path, fs_ref=250.0)


def test_annotation_unknown_label(tmp_path):
    path = tmp_path / "c.ann"
    path.write_text("100,Q\n")
    with pytest.raises(FormatError, match="label"):
        read_annotations(path, fs_ref=250.0)


def test_annotation_non_integer_index(tmp_path):
    path = tmp_path / "d.ann"
    path.write_text("10.5,N\n")
    with pytest.raises(FormatError, match="integer"):
        read_annotations(path, fs_ref=250.0)


def test_annotation_round_trip_bytes(tmp_path):
    rng = np.random.default_rng(3)
    positions = np.cumsum(rng.integers(1, 500, size=1000))
    labels = np.where(rng.random(1000) < 0.2, WIDE, NARROW)
    ann = BeatAnnotation(positions, labels, fs_ref=250.0)
    p1 = tmp_path / "e.ann"
    p2 = tmp_path / "f.ann"
    write_annotations(ann, p1)
    write_annotations(read_annotations(p1, fs_ref=250.0), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_annotation_invariants():
    with pytest.raises(ValueError):
        BeatAnnotation([1, 1], [NARROW, NARROW], fs_ref=1.0)
    with pytest.raises(ValueError):
        BeatAnnotation([1, 2], [NARROW], fs_ref=1.0)


# ---------------------------------------------------------------------------
# MIT-BIH format 212

def test_212_positive_pair():
    assert decode_212(bytes([0x01, 0x00, 0x02]))[:, 0].tolist() == [1, 2]


def test_212_negative_and_zero():
    s = decode_212(bytes([0xFF, 0x0F, 0x00]))
    assert s[0, 0] == -1  # 0xFFF two's complement
    assert s[1, 0] == 0


def test_212_length_not_multiple_of_three():
    with pytest.raises(FormatError, match="multiple of 3"):
        decode_212(b"\x00\x01")


def test_212_encode_decode_round_trip():
    rng = np.random.default_rng(0)
    samples = rng.integers(-2048, 2048, size=(2, 3000)).astype(np.int16)
    edge = np.array([[2047, -2048, 0, -1, 1], [-2048, 2047, -1, 0, 1]], dtype=np.int16)
    for block in (samples, edge):
        assert np.array_equal(decode_212(encode_212(block)), block)


def _independent_decode_212(raw: bytes):
    """Struct-based byte-at-a-time reference decoder (test oracle)."""
    out = [[], []]
    for off in range(0, len(raw), 3):
        b0, b1, b2 = struct.unpack_from("BBB", raw, off)
        s1 = ((b1 & 0x0F) << 8) | b0
        s2 = ((b1 & 0xF0) << 4) | b2
        if s1 & 0x800:
            s1 -= 4096
        if s2 & 0x800:
            s2 -= 4096
        out[0].append(s1)
        out[1].append(s2)
    return np.asarray(out, dtype=np.int16)


def test_212_against_independent_decoder():
    rng = np.random.default_rng(7)
    raw = rng.integers(0, 256, size=3 * 4096, dtype=np.uint8).tobytes()
    assert np.array_equal(decode_212(raw), _independent_decode_212(raw))


def test_212_frozen_checksum():
    # deterministic pseudo-record; expected checksum computed once with the
    # independent struct decoder above and frozen here
    rng = np.random.default_rng(20260101)
    raw = rng.integers(0, 256, size=3 * 2500, dtype=np.uint8).tobytes()
    decoded = decode_212(raw)
    assert int(decoded.astype(np.int64).sum()) == 174379
    assert int(np.abs(decoded.astype(np.int64)).sum()) == 5121261


def test_import_mitbih_212(tmp_path):
    samples = np.array([[200, -100, 0], [1024, 0, -2048]], dtype=np.int16)
    dat = tmp_path / "r.dat"
    dat.write_bytes(encode_212(samples))
    header = MitBih212Header(fs=360.0, gain=(200.0, 100.0), baseline=(0, 1024))
    rec = import_mitbih_212(dat, header)
    assert rec.fs == 360.0
    assert np.allclose(rec.channels[0], [1.0, -0.5, 0.0])
    assert np.allclose(rec.channels[1], [0.0, -10.24, -30.72])


def test_import_mitbih_sidecar(tmp_path):
    sidecar = tmp_path / "h.json"
    sidecar.write_text(json.dumps({"fs": 360, "gain": [200, 200],
                                   "baseline": [1024, 1024]}))
    header = MitBih212Header.from_json(sidecar)
    assert header.fs == 360.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"fs": 360}))
    with pytest.raises(FormatError, match="missing"):
        MitBih212Header.from_json(bad)


# ---------------------------------------------------------------------------
# synthetic generator

def test_synth_exact_beat_count_no_jitter():
    cfg = SynthConfig(duration_s=60.0, mean_hr_bpm=60.0, hr_jitter=0.0,
                      wide_fraction=0.0, noise_std_mv=0.0, seed=4)
    record, ann = generate_synthetic(cfg)
    assert len(ann) == 60
    spacing = np.diff(ann.positions)
    assert np.all(np.abs(spacing - 250) <= 1)  # 1 s at 250 Hz


def test_synth_beat_count_matches_rate():
    for hr in (50.0, 75.0, 120.0):
        cfg = SynthConfig(duration_s=90.0, mean_hr_bpm=hr, hr_jitter=0.0,
                          wide_fraction=0.0, noise_std_mv=0.0, seed=1)
        _, ann = generate_synthetic(cfg)
        expected = int(np.floor(90.0 / (60.0 / hr)))
        assert abs(len(ann) - expected) <= 1


def test_synth_wide_fraction_zero_all_narrow():
    cfg = SynthConfig(duration_s=30.0, wide_fraction=0.0, seed=2)
    _, ann = generate_synthetic(cfg)
    assert set(ann.labels) == {NARROW}


def test_synth_deterministic():
    cfg = SynthConfig(duration_s=20.0, wide_fraction=0.3, noise_std_mv=0.1,
                      dropout_segments=[(0, 5.0, 8.0)], seed=9)
    r1, a1 = generate_synthetic(cfg)
    r2, a2 = generate_synthetic(cfg)
    assert np.array_equal(r1.channels, r2.channels)
    assert np.array_equal(a1.positions, a2.positions)
    assert np.array_equal(a1.labels, a2.labels)


def test_synth_dropout_zeroes_channel():
    cfg = SynthConfig(duration_s=30.0, noise_std_mv=0.2,
                      dropout_segments=[(1, 10.0, 12.5)], seed=5)
    record, _ = generate_synthetic(cfg)
    lo, hi = int(10.0 * 250), int(12.5 * 250)
    assert np.all(record.channels[1, lo:hi] == 0.0)
    assert np.any(record.channels[0, lo:hi] != 0.0)


def test_synth_wide_qrs_duration_convention():
    # wide beats carry a broad R wave; check the widths via the label masks
    cfg = SynthConfig(duration_s=120.0, wide_fraction=0.5, hr_jitter=0.0,
                      noise_std_mv=0.0, seed=11)
    record, ann = generate_synthetic(cfg)
    fs = record.fs

    def qrs_width_s(pos):
        # width where |signal| exceeds 30 % of the local peak
        lo, hi = int(pos - 0.15 * fs), int(pos + 0.15 * fs)
        seg = np.abs(np.asarray(record.channels[0][lo:hi], dtype=np.float64))
        above = seg > 0.3 * seg.max()
        return above.sum() / fs

    wide_w = [qrs_width_s(p) for p, l in zip(ann.positions, ann.labels) if l == WIDE]
    narrow_w = [qrs_width_s(p) for p, l in zip(ann.positions, ann.labels) if l == NARROW]
    assert np.median(wide_w) > np.median(narrow_w) * 1.4


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(duration_s=0).validate()
    with pytest.raises(ValueError):
        SynthConfig(wide_fraction=1.5).validate()
    with pytest.raises(ValueError):
        SynthConfig(dropout_segments=[(0, 50.0, 40.0)]).validate()
    with pytest.raises(ValueError):
        SynthConfig(dropout_segments=[(5, 0.0, 1.0)]).validate()
