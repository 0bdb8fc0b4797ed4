"""Classical QRS detector after Pan & Tompkins (1985).

Chain on the first channel: 5-15 Hz band-pass -> five-point derivative ->
squaring -> 150 ms moving-window integration -> adaptive dual thresholds
with search-back. All filters here are zero-phase (symmetric FIR /
centered windows) so detected fiducial points need no delay compensation;
the R position is refined as the largest band-passed excursion near each
accepted integration peak.

Threshold bookkeeping follows the original paper: running signal/noise
peak estimates SPK/NPK with 0.125/0.875 smoothing, THR1 = NPK +
0.25 (SPK - NPK), THR2 = 0.5 THR1 for search-back, 200 ms refractory,
search-back triggered at 1.66 times the running average RR. T-wave slope
discrimination is omitted; the refractory period covers its common case.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .io import BeatAnnotation, EcgRecord
from .preprocess import design_lowpass

BAND_LOW_HZ = 5.0
BAND_HIGH_HZ = 15.0
INTEGRATION_WINDOW_S = 0.150
REFRACTORY_S = 0.200
SEARCHBACK_FACTOR = 1.66
REFINE_WINDOW_S = 0.100


def bandpass_5_15(x: np.ndarray, fs: float) -> np.ndarray:
    """Zero-phase FIR band-pass built as a difference of windowed sincs."""
    n_taps = int(fs) | 1
    high = min(BAND_HIGH_HZ, 0.45 * fs)
    taps = design_lowpass(fs, high, n_taps) - design_lowpass(fs, BAND_LOW_HZ, n_taps)
    m = n_taps // 2
    pad = min(m, x.size)
    xp = np.pad(x, pad, mode="symmetric")
    y = np.convolve(xp, taps, mode="same")
    return y[pad : pad + x.size]


def derivative(x: np.ndarray) -> np.ndarray:
    """Centered five-point derivative (antisymmetric, zero-phase)."""
    kernel = np.array([-1.0, -2.0, 0.0, 2.0, 1.0]) / 8.0
    pad = 2
    xp = np.pad(x, pad, mode="edge")
    y = np.convolve(xp, kernel[::-1], mode="same")
    return y[pad : pad + x.size]


def integrate(x: np.ndarray, fs: float) -> np.ndarray:
    half = max(int(round(INTEGRATION_WINDOW_S * fs / 2.0)), 1)
    return kernels.moving_mean(np.ascontiguousarray(x), half)


def _candidate_peaks(mwi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Plateau-centered local maxima of the integrated signal.

    Zero-height candidates are dropped: the integrator output is a squared
    slope, so exactly zero means no signal at all (flat line).
    """
    idx = kernels.local_peaks(np.ascontiguousarray(mwi), -np.inf, 1)
    keep = mwi[idx] > 0.0
    idx = idx[keep]
    return idx, mwi[idx]


def _adaptive_select(cand_idx: np.ndarray, cand_val: np.ndarray,
                     fs: float, n: int) -> np.ndarray:
    if cand_idx.size == 0:
        return np.zeros(0, dtype=np.int64)
    refractory = int(round(REFRACTORY_S * fs))
    warmup = min(int(round(2.0 * fs)), n)
    head = cand_val[cand_idx < warmup]
    if head.size:
        spk = float(head.max()) / 3.0
        npk = float(head.mean()) / 2.0
    else:
        spk = float(cand_val.max()) / 3.0
        npk = float(cand_val.mean()) / 2.0

    accepted: list[int] = []
    noise: list[int] = []  # candidate indices rejected since the last QRS
    rr_hist: list[float] = []

    def thr1() -> float:
        return npk + 0.25 * (spk - npk)

    for ci in range(cand_idx.size):
        i = int(cand_idx[ci])
        v = float(cand_val[ci])
        since_last = i - accepted[-1] if accepted else None
        if v >= thr1() and (since_last is None or since_last >= refractory):
            if accepted:
                rr_hist.append(float(i - accepted[-1]))
                del rr_hist[:-8]
            accepted.append(i)
            noise.clear()
            spk = 0.125 * v + 0.875 * spk
            continue
        npk = 0.125 * v + 0.875 * npk
        noise.append(ci)
        # search-back: too long without a QRS -> re-test skipped peaks at THR2
        if accepted and rr_hist:
            rr_avg = sum(rr_hist) / len(rr_hist)
            if i - accepted[-1] > SEARCHBACK_FACTOR * rr_avg:
                thr2 = 0.5 * thr1()
                best_ci = -1
                best_v = thr2
                for nci in noise:
                    j = int(cand_idx[nci])
                    if j - accepted[-1] < refractory:
                        continue
                    if cand_val[nci] >= best_v:
                        best_v = float(cand_val[nci])
                        best_ci = nci
                if best_ci >= 0:
                    j = int(cand_idx[best_ci])
                    rr_hist.append(float(j - accepted[-1]))
                    del rr_hist[:-8]
                    accepted.append(j)
                    spk = 0.25 * best_v + 0.75 * spk
                    noise.clear()
    return np.asarray(sorted(accepted), dtype=np.int64)


def _refine_positions(accepted: np.ndarray, bp: np.ndarray, fs: float) -> np.ndarray:
    """Snap each accepted integration peak to the nearest band-passed extremum."""
    half = max(int(round(REFINE_WINDOW_S * fs)), 1)
    out = np.empty_like(accepted)
    mag = np.abs(bp)
    n = bp.size
    for k, i in enumerate(accepted):
        lo = max(i - half, 0)
        hi = min(i + half + 1, n)
        out[k] = lo + int(np.argmax(mag[lo:hi]))
    out = np.unique(out)
    return out


def detect_pan_tompkins(record: EcgRecord) -> BeatAnnotation:
    """R-peak positions (positions-only annotation) from the first channel."""
    x = np.asarray(record.channels[0], dtype=np.float64)
    fs = record.fs
    if x.size == 0:
        return BeatAnnotation.positions_only(np.zeros(0, dtype=np.int64), fs)
    bp = bandpass_5_15(x, fs)
    der = derivative(bp)
    mwi = integrate(der * der, fs)
    cand_idx, cand_val = _candidate_peaks(mwi)
    accepted = _adaptive_select(cand_idx, cand_val, fs, x.size)
    positions = _refine_positions(accepted, bp, fs)
    # enforce the refractory spacing after refinement
    min_dist = int(round(REFRACTORY_S * fs))
    kept: list[int] = []
    for p in positions:
        if kept and p - kept[-1] < min_dist:
            if mag_at(bp, p) > mag_at(bp, kept[-1]):
                kept[-1] = int(p)
            continue
        kept.append(int(p))
    return BeatAnnotation.positions_only(np.asarray(kept, dtype=np.int64), fs)


def mag_at(bp: np.ndarray, i: int) -> float:
    return float(abs(bp[i]))
