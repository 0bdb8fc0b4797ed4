"""Noise-reduction chain applied before any model sees the signal.

Order: disconnection gap filling -> baseline removal (two passes of a
centered mean filter) -> 40 Hz low-pass -> factor-2 decimation. Training
and inference windows are additionally median-centered and IQR-scaled
per channel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .io import EcgRecord

logger = logging.getLogger(__name__)

IQR_FLOOR = 1e-6


@dataclass
class PreprocessConfig:
    mean_filter_window: int = 100
    lowpass_cutoff_hz: float = 40.0
    lowpass_taps: int = 101
    downsample_factor: int = 2
    gap_zero_run_min: int = 10

    def validate(self, fs: float):
        if self.mean_filter_window < 1:
            raise ValueError("mean_filter_window must be >= 1")
        if not (0 < self.lowpass_cutoff_hz < fs / 2):
            raise ValueError(
                f"lowpass cutoff {self.lowpass_cutoff_hz} Hz outside (0, fs/2)"
            )
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")
        if self.lowpass_taps < 3 or self.lowpass_taps % 2 == 0:
            raise ValueError("lowpass_taps must be odd and >= 3")
        if self.gap_zero_run_min < 1:
            raise ValueError("gap_zero_run_min must be >= 1")


def _zero_runs(mask: np.ndarray):
    """(start, end) pairs of runs of True, end exclusive."""
    d = np.diff(mask.astype(np.int8))
    starts = np.flatnonzero(d == 1) + 1
    ends = np.flatnonzero(d == -1) + 1
    if mask[0]:
        starts = np.concatenate(([0], starts))
    if mask[-1]:
        ends = np.concatenate((ends, [mask.size]))
    return starts, ends


def fill_gaps(channel_samples, gap_zero_run_min: int) -> np.ndarray:
    """Replace long exact-zero runs (disconnected electrode) by a linear ramp.

    Interior runs ramp between the bounding non-zero samples; runs touching
    a record edge hold the nearest non-zero value. Runs shorter than
    ``gap_zero_run_min`` are left alone. An all-zero channel comes back
    unchanged (there is nothing to interpolate from).
    """
    x = np.array(channel_samples, dtype=np.float64)
    if x.size == 0:
        return x
    zero = x == 0.0
    if not zero.any():
        return x
    if zero.all():
        logger.warning("fill_gaps: channel is all zeros (disconnected), left as is")
        return x
    starts, ends = _zero_runs(zero)
    n = x.size
    for s, e in zip(starts, ends):
        if e - s < gap_zero_run_min:
            continue
        if s == 0:
            x[s:e] = x[e]
        elif e == n:
            x[s:e] = x[s - 1]
        else:
            left, right = x[s - 1], x[e]
            gap = e - s
            steps = np.arange(1, gap + 1, dtype=np.float64)
            x[s:e] = left + (right - left) * steps / (gap + 1)
    return x


def mean_filter(channel_samples, window: int) -> np.ndarray:
    """Centered moving average, edge-truncated.

    The nominal ``window`` is realized symmetrically as ``2*(window//2)+1``
    samples so the filter is zero-phase; an asymmetric even window would
    shift beat positions and leave a slope residue on ramps.
    """
    x = np.ascontiguousarray(channel_samples, dtype=np.float64)
    return kernels.moving_mean(x, window // 2)


def detrend(channel_samples, window: int) -> np.ndarray:
    """Remove baseline wander: x minus two mean-filter passes of itself."""
    x = np.asarray(channel_samples, dtype=np.float64)
    return x - mean_filter(mean_filter(x, window), window)


def design_lowpass(fs: float, cutoff_hz: float, n_taps: int = 101) -> np.ndarray:
    """Hamming-windowed sinc low-pass taps, normalized to unit DC gain."""
    if n_taps % 2 == 0:
        raise ValueError("n_taps must be odd for a zero-phase filter")
    m = n_taps // 2
    n = np.arange(n_taps) - m
    fc = cutoff_hz / fs
    h = 2.0 * fc * np.sinc(2.0 * fc * n)
    h *= np.hamming(n_taps)
    return h / h.sum()


def frequency_response(taps: np.ndarray, fs: float, freq_hz: float) -> complex:
    n = np.arange(taps.size)
    return complex(np.sum(taps * np.exp(-2j * math.pi * freq_hz * n / fs)))


def lowpass(channel_samples, fs: float, cutoff_hz: float, n_taps: int = 101) -> np.ndarray:
    """Zero-phase FIR low-pass via symmetric padding + full convolution."""
    x = np.asarray(channel_samples, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    taps = design_lowpass(fs, cutoff_hz, n_taps)
    m = n_taps // 2
    pad = min(m, x.size)
    xp = np.pad(x, pad, mode="symmetric")
    y = np.convolve(xp, taps, mode="same")
    return y[pad : pad + x.size]


def downsample(channel_samples, factor: int) -> np.ndarray:
    """Keep every ``factor``-th sample; the caller low-passes first."""
    x = np.asarray(channel_samples)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    return x[::factor].copy()


def normalize_window(window_samples) -> np.ndarray:
    """Median-center and IQR-scale each channel of a [n_ch, n] window."""
    w = np.atleast_2d(np.asarray(window_samples, dtype=np.float64))
    out = np.empty_like(w)
    for c in range(w.shape[0]):
        med = np.median(w[c]) if w.shape[1] else 0.0
        if w.shape[1]:
            q75, q25 = np.percentile(w[c], [75.0, 25.0])
            scale = max(q75 - q25, IQR_FLOOR)
        else:
            scale = 1.0
        out[c] = (w[c] - med) / scale
    return out


def preprocess_record(record: EcgRecord, config: PreprocessConfig) -> EcgRecord:
    """Full chain per channel; output fs = input fs / downsample factor.

    Beat annotations are not touched here; the caller rescales positions by
    the downsample factor.
    """
    config.validate(record.fs)
    if record.n_samples == 0:
        return EcgRecord(record.channels.copy(), fs=record.fs / config.downsample_factor,
                         record_id=record.record_id)
    processed = []
    for c in range(record.n_channels):
        x = fill_gaps(record.channels[c], config.gap_zero_run_min)
        x = detrend(x, config.mean_filter_window)
        x = lowpass(x, record.fs, config.lowpass_cutoff_hz, config.lowpass_taps)
        x = downsample(x, config.downsample_factor)
        processed.append(x)
    return EcgRecord(np.stack(processed), fs=record.fs / config.downsample_factor,
                     record_id=record.record_id)


def rescale_positions(positions: np.ndarray, factor: int) -> np.ndarray:
    """Map annotation indices into the decimated time base (round to nearest)."""
    pos = np.asarray(positions, dtype=np.float64) / factor
    return np.round(pos).astype(np.int64)


def extract_window(channels: np.ndarray, start: int, length: int) -> np.ndarray:
    """Slice [n_ch, length] starting at ``start``, zero-padded outside the record."""
    n_ch, n = channels.shape
    out = np.zeros((n_ch, length), dtype=np.float64)
    lo = max(start, 0)
    hi = min(start + length, n)
    if hi > lo:
        out[:, lo - start : hi - start] = channels[:, lo:hi]
    return out
