"""Record and annotation I/O plus the synthetic ECG generator.

File formats
------------
Record: one UTF-8 JSON header line ``{"record_id", "fs", "n_channels",
"n_samples"}`` terminated by ``\\n``, followed by ``n_channels * n_samples``
little-endian float32 samples, sample-major interleaved
(s0c0 s0c1 s1c0 s1c1 ...). Channel data is kept as float32 in memory so the
round trip through the file is bit-exact.

Annotation: CSV without header, ``sample_index,label`` with label ``N``
(narrow) or ``W`` (wide), LF line endings, indices strictly increasing.

MIT-BIH ``.dat`` files in format 212 are importable; the header values
(fs, per-channel gain and baseline) come from a sidecar JSON or CLI flags,
not from ``.hea`` parsing.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

NARROW = "N"
WIDE = "W"

# synthetic beat morphology: per-wave (time offset s, amplitude mV, width s)
# relative to the beat center, separate projections for the two channels
_QRS_DUR_NARROW_S = 0.08   # <= 90 ms contract for narrow complexes
_QRS_DUR_WIDE_S = 0.14     # >= 120 ms, standard "wide" convention
_PREMATURITY = 0.75        # wide beats arrive early, compensatory pause after


class FormatError(ValueError):
    """Malformed record/annotation/checkpoint file."""


@dataclass
class EcgRecord:
    """Multi-channel sampled signal. ``channels`` is float32 [n_ch, n]."""

    channels: np.ndarray
    fs: float
    record_id: str = "unnamed"

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=np.float32))
        if self.channels.ndim != 2:
            raise ValueError("channels must be a 2-D array [n_channels, n_samples]")
        if self.channels.shape[0] < 1:
            raise ValueError("record needs at least one channel")
        if not (self.fs > 0):
            raise ValueError(f"sampling frequency must be positive, got {self.fs}")
        self.fs = float(self.fs)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs


@dataclass
class BeatAnnotation:
    """Beat positions (sample indices) with narrow/wide labels."""

    positions: np.ndarray
    labels: np.ndarray
    fs_ref: float

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype="<U1")
        if self.positions.ndim != 1 or self.labels.ndim != 1:
            raise ValueError("positions and labels must be 1-D")
        if self.positions.size != self.labels.size:
            raise ValueError("positions and labels must have equal length")
        if self.positions.size and np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")
        bad = set(np.unique(self.labels)) - {NARROW, WIDE}
        if bad:
            raise ValueError(f"unknown beat labels: {sorted(bad)}")
        if not (self.fs_ref > 0):
            raise ValueError("fs_ref must be positive")
        self.fs_ref = float(self.fs_ref)

    def __len__(self) -> int:
        return self.positions.size

    @property
    def wide_mask(self) -> np.ndarray:
        return self.labels == WIDE

    @classmethod
    def positions_only(cls, positions, fs_ref) -> "BeatAnnotation":
        positions = np.asarray(positions, dtype=np.int64)
        return cls(positions, np.full(positions.size, NARROW, dtype="<U1"), fs_ref)


@dataclass
class SynthConfig:
    """Knobs of the synthetic two-lead generator used as the test oracle."""

    duration_s: float = 60.0
    mean_hr_bpm: float = 60.0
    hr_jitter: float = 0.05
    wide_fraction: float = 0.1
    noise_std_mv: float = 0.05
    dropout_segments: list = field(default_factory=list)  # (channel, start_s, end_s)
    seed: int = 0
    fs: float = 250.0
    n_channels: int = 2

    def validate(self):
        if not (self.duration_s > 0):
            raise ValueError("duration_s must be positive")
        if not (0.0 <= self.wide_fraction <= 1.0):
            raise ValueError("wide_fraction must be within [0, 1]")
        if not (self.mean_hr_bpm > 0):
            raise ValueError("mean_hr_bpm must be positive")
        if not (0.0 <= self.hr_jitter < 1.0):
            raise ValueError("hr_jitter must be within [0, 1)")
        if self.noise_std_mv < 0:
            raise ValueError("noise_std_mv must be non-negative")
        if not (self.fs > 0):
            raise ValueError("fs must be positive")
        for seg in self.dropout_segments:
            ch, start_s, end_s = seg
            if not (0 <= ch < self.n_channels):
                raise ValueError(f"dropout segment channel {ch} out of range")
            if not (0.0 <= start_s < end_s <= self.duration_s):
                raise ValueError(f"dropout segment {seg} outside the record")


# ---------------------------------------------------------------------------
# Project record format

def write_record(record: EcgRecord, path) -> None:
    header = {
        "record_id": record.record_id,
        "fs": record.fs,
        "n_channels": record.n_channels,
        "n_samples": record.n_samples,
    }
    payload = np.ascontiguousarray(record.channels.T, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())


def read_record(path) -> EcgRecord:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable record header: {exc}") from exc
    missing = {"record_id", "fs", "n_channels", "n_samples"} - set(header)
    if missing:
        raise FormatError(f"{path}: header missing fields {sorted(missing)}")
    fs = header["fs"]
    n_channels = header["n_channels"]
    n_samples = header["n_samples"]
    if not isinstance(n_channels, int) or n_channels < 1:
        raise FormatError(f"{path}: invalid n_channels {n_channels!r}")
    if not isinstance(n_samples, int) or n_samples < 0:
        raise FormatError(f"{path}: invalid n_samples {n_samples!r}")
    if not isinstance(fs, (int, float)) or not fs > 0:
        raise FormatError(f"{path}: invalid fs {fs!r}")
    expected = 4 * n_channels * n_samples
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(n_samples, n_channels)
    return EcgRecord(frames.T.copy(), fs=float(fs), record_id=str(header["record_id"]))


# ---------------------------------------------------------------------------
# Annotation CSV

def write_annotations(ann: BeatAnnotation, path) -> None:
    lines = [f"{int(p)},{lab}" for p, lab in zip(ann.positions, ann.labels)]
    text = "\n".join(lines)
    if lines:
        text += "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_annotations(path, fs_ref: float) -> BeatAnnotation:
    positions = []
    labels = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'sample_index,label'")
        try:
            pos = int(parts[0])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer index {parts[0]!r}") from exc
        label = parts[1].strip()
        if label not in (NARROW, WIDE):
            raise FormatError(f"{path}:{lineno}: unknown label {label!r}")
        if positions and pos <= positions[-1]:
            raise FormatError(f"{path}:{lineno}: indices must be strictly increasing")
        positions.append(pos)
        labels.append(label)
    return BeatAnnotation(np.asarray(positions, dtype=np.int64),
                          np.asarray(labels, dtype="<U1"), fs_ref)


# ---------------------------------------------------------------------------
# MIT-BIH format 212

@dataclass
class MitBih212Header:
    """Per-record header values normally found in the WFDB .hea file."""

    fs: float
    gain: tuple
    baseline: tuple

    @classmethod
    def from_json(cls, path) -> "MitBih212Header":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        missing = {"fs", "gain", "baseline"} - set(data)
        if missing:
            raise FormatError(f"{path}: sidecar header missing {sorted(missing)}")
        return cls(fs=float(data["fs"]),
                   gain=tuple(float(g) for g in data["gain"]),
                   baseline=tuple(int(b) for b in data["baseline"]))


def decode_212(raw: bytes) -> np.ndarray:
    """Unpack format-212 bytes into an int16 array [2, n_pairs] of raw ADC units."""
    if len(raw) % 3 != 0:
        raise FormatError(
            f"format-212 payload length {len(raw)} is not a multiple of 3"
        )
    b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    s1 = b[:, 0] | ((b[:, 1] & 0x0F) << 8)
    s2 = b[:, 2] | ((b[:, 1] & 0xF0) << 4)
    # 12-bit two's complement
    s1 = np.where(s1 >= 2048, s1 - 4096, s1)
    s2 = np.where(s2 >= 2048, s2 - 4096, s2)
    return np.stack([s1, s2]).astype(np.int16)


def encode_212(samples: np.ndarray) -> bytes:
    """Inverse of :func:`decode_212`; samples int [2, n] in [-2048, 2047]."""
    s = np.asarray(samples, dtype=np.int32)
    if s.ndim != 2 or s.shape[0] != 2:
        raise ValueError("encode_212 expects an array [2, n]")
    if s.size and (s.min() < -2048 or s.max() > 2047):
        raise ValueError("format-212 samples must fit in 12 bits")
    u1 = np.where(s[0] < 0, s[0] + 4096, s[0])
    u2 = np.where(s[1] < 0, s[1] + 4096, s[1])
    out = np.empty((s.shape[1], 3), dtype=np.uint8)
    out[:, 0] = u1 & 0xFF
    out[:, 1] = ((u1 >> 8) & 0x0F) | (((u2 >> 8) & 0x0F) << 4)
    out[:, 2] = u2 & 0xFF
    return out.tobytes()


def import_mitbih_212(dat_path, header: MitBih212Header) -> EcgRecord:
    raw = Path(dat_path).read_bytes()
    adc = decode_212(raw)
    if len(header.gain) < 2 or len(header.baseline) < 2:
        raise FormatError("format-212 header needs gain and baseline for 2 channels")
    gain = np.asarray(header.gain[:2], dtype=np.float64)[:, None]
    baseline = np.asarray(header.baseline[:2], dtype=np.float64)[:, None]
    if np.any(gain == 0):
        raise FormatError("channel gain must be non-zero")
    mv = (adc.astype(np.float64) - baseline) / gain
    return EcgRecord(mv, fs=header.fs, record_id=Path(dat_path).stem)


# ---------------------------------------------------------------------------
# Synthetic generator

def _gaussian_bump(out_row, fs, center_s, amp, width_s):
    """Add a Gaussian wave, clipped at the record edges (no wrap)."""
    n = out_row.shape[0]
    lo = max(int(np.floor((center_s - 4 * width_s) * fs)), 0)
    hi = min(int(np.ceil((center_s + 4 * width_s) * fs)) + 1, n)
    if hi <= lo:
        return
    t = np.arange(lo, hi) / fs
    out_row[lo:hi] += amp * np.exp(-0.5 * ((t - center_s) / width_s) ** 2)


def _beat_waves(label: str):
    """Per-channel wave list for one beat: (offset_s, amp_ch0, amp_ch1, width_s)."""
    if label == WIDE:
        sigma = _QRS_DUR_WIDE_S / 6.0
        return [
            (0.0, 0.9, -0.75, sigma),          # broad R, inverted in lead 2
            (0.30, -0.35, -0.20, 0.07),        # discordant T
        ]
    sigma = _QRS_DUR_NARROW_S / 6.0
    return [
        (-0.16, 0.12, 0.08, 0.025),            # P
        (-0.035, -0.15, -0.10, sigma / 1.6),   # Q
        (0.0, 1.0, 0.70, sigma),               # R
        (0.035, -0.20, -0.12, sigma / 1.6),    # S
        (0.25, 0.30, 0.18, 0.06),              # T
    ]


def generate_synthetic(config: SynthConfig):
    """Build a labeled two-lead record; returns (EcgRecord, BeatAnnotation).

    Beats are sums of Gaussian waves. Wide beats are premature (the
    preceding RR shrinks, the following one stretches, total time
    preserved), mimicking ventricular ectopy so that rhythm features carry
    real signal for the stacking stage.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    fs = config.fs
    n = int(round(config.duration_s * fs))
    channels = np.zeros((config.n_channels, n))

    rr_base = 60.0 / config.mean_hr_bpm
    centers = []
    labels = []
    t = 0.5 * rr_base
    label = NARROW if config.wide_fraction < 1.0 else WIDE
    margin = 0.02
    while t < config.duration_s - margin:
        centers.append(t)
        labels.append(label)
        next_label = WIDE if rng.random() < config.wide_fraction else NARROW
        rr = rr_base * (1.0 + config.hr_jitter * rng.uniform(-1.0, 1.0))
        if next_label == WIDE:
            rr *= _PREMATURITY
        elif label == WIDE:
            rr *= 2.0 - _PREMATURITY
        t += rr
        label = next_label

    for center, lab in zip(centers, labels):
        for offset, amp0, amp1, width in _beat_waves(lab):
            # amplitude wobble per wave, shared between the two projections
            wobble = 1.0 + 0.1 * rng.uniform(-1.0, 1.0)
            _gaussian_bump(channels[0], fs, center + offset, amp0 * wobble, width)
            for ch in range(1, config.n_channels):
                _gaussian_bump(channels[ch], fs, center + offset, amp1 * wobble, width)

    if config.noise_std_mv > 0:
        channels += rng.normal(0.0, config.noise_std_mv, channels.shape)

    for ch, start_s, end_s in config.dropout_segments:
        channels[ch, int(round(start_s * fs)) : int(round(end_s * fs))] = 0.0

    positions = np.round(np.asarray(centers) * fs).astype(np.int64)
    record = EcgRecord(channels, fs=fs, record_id=f"synth-{config.seed}")
    ann = BeatAnnotation(positions, np.asarray(labels, dtype="<U1"), fs_ref=fs)
    return record, ann
