"""Loudspeaker tells: spectral decay, peak patterns, and LPCC.

A live hovering drone concentrates power in a narrow low band; a
loudspeaker replaying it spreads power upward (distortion harmonics,
driver hiss) and flattens the in-band peak structure. These features feed
the loudspeaker-presence and loudspeaker-content classifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .audio import AudioClip, Spectrum, Window, frame_signal, power_spectral_density
from .errors import (
    ClipTooShort,
    EmptyBand,
    SilentClip,
    UnstableModel,
    ZeroTotalPower,
)
from .similarity import BandSpec

#: Cumulative-power checkpoints (Hz). 500 and 4500 are the landmarks that
#: separate live from replayed spectra; the rest sample the curve between.
DEFAULT_CHECKPOINTS_HZ = (250.0, 500.0, 1000.0, 2000.0, 4500.0, 8000.0)

#: Peaks must rise this far above their surroundings to count; below sits
#: noise-floor ripple.
PEAK_PROMINENCE_DB = 6.0

DEFAULT_LPC_ORDER = 12
DEFAULT_LPCC_COEFFS = 12
LPC_FRAME_MS = 25.0
LPC_HOP_MS = 10.0


def cumulative_power_profile(spec: Spectrum, checkpoints_hz) -> np.ndarray:
    """Fraction of total spectral power at or below each checkpoint."""
    checkpoints = np.asarray(checkpoints_hz, dtype=np.float64)
    if checkpoints.size == 0:
        raise ValueError("need at least one checkpoint")
    if np.any(np.diff(checkpoints) <= 0):
        raise ValueError("checkpoints must be strictly ascending")
    if checkpoints[-1] > spec.bin_freq_hz[-1] + spec.resolution_hz / 2:
        raise ValueError("checkpoints must stay within the spectrum range")
    total = float(np.sum(spec.power))
    if total <= 0.0:
        raise ZeroTotalPower("spectrum has no power")
    cumulative = np.cumsum(spec.power)
    idx = np.searchsorted(spec.bin_freq_hz, checkpoints, side="right") - 1
    fractions = np.where(idx >= 0, cumulative[np.maximum(idx, 0)], 0.0) / total
    return fractions


@dataclass(frozen=True)
class PeakStats:
    peak_count: int
    mean_prominence_db: float
    spectral_flatness: float


def peak_pattern_features(spec: Spectrum, band: BandSpec) -> PeakStats:
    """Peak count/prominence and spectral flatness inside one band."""
    mask = (spec.bin_freq_hz >= band.low_hz) & (spec.bin_freq_hz <= band.high_hz)
    power = spec.power[mask]
    if power.size == 0:
        raise EmptyBand(f"no bins in [{band.low_hz}, {band.high_hz}] Hz")
    floor = max(float(np.max(power)) * 1e-12, 1e-300)
    power_db = 10.0 * np.log10(np.maximum(power, floor))
    peaks, props = sp_signal.find_peaks(power_db, prominence=PEAK_PROMINENCE_DB)
    mean_prom = float(np.mean(props["prominences"])) if peaks.size else 0.0
    mean_power = float(np.mean(power))
    if mean_power <= 0.0:
        flatness = 1.0
    else:
        flatness = float(np.exp(np.mean(np.log(np.maximum(power, floor))))
                         / mean_power)
    return PeakStats(int(peaks.size), mean_prom, flatness)


def autocorrelation(frame: np.ndarray, order: int) -> np.ndarray:
    """Biased autocorrelation r[0..order] of one frame."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.size
    if order >= n:
        raise ValueError("order must be smaller than the frame length")
    return np.array([np.dot(frame[:n - k], frame[k:]) for k in range(order + 1)])


def levinson_durbin(r: np.ndarray, order: int
                    ) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve the LPC normal equations by the Levinson-Durbin recursion.

    Returns (a, k, err): prediction coefficients such that
    x[n] ~ sum_m a[m] x[n-m-1], the reflection coefficients, and the final
    prediction-error power.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.size < order + 1:
        raise ValueError("need r[0..order]")
    err = float(r[0])
    if err <= 0.0:
        raise UnstableModel("zero-power frame has no LPC model")
    a = np.zeros(order)
    k = np.zeros(order)
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[:i - 1], r[i - 1:0:-1])
        k_i = acc / err
        k[i - 1] = k_i
        a_prev = a[:i - 1].copy()
        a[i - 1] = k_i
        a[:i - 1] = a_prev - k_i * a_prev[::-1]
        err *= 1.0 - k_i * k_i
        if err <= 0.0:
            raise UnstableModel(
                f"prediction-error power vanished at order {i}"
            )
    return a, k, err


def lpc_to_cepstrum(a: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Standard LPC-to-cepstrum recursion, gain term excluded.

    c[0] here is the first cepstral coefficient c_1; the model gain sits in
    the conventional c_0 and is deliberately dropped, which makes the
    result invariant to amplitude scaling.
    """
    p = len(a)
    c = np.zeros(n_coeffs)
    for n in range(1, n_coeffs + 1):
        acc = a[n - 1] if n <= p else 0.0
        lo = max(1, n - p)
        for k in range(lo, n):
            acc += (k / n) * c[k - 1] * a[n - k - 1]
        c[n - 1] = acc
    return c


def lpcc(clip: AudioClip, lpc_order: int = DEFAULT_LPC_ORDER,
         n_coeffs: int = DEFAULT_LPCC_COEFFS,
         frame_ms: float = LPC_FRAME_MS, hop_ms: float = LPC_HOP_MS
         ) -> np.ndarray:
    """Frame-averaged linear prediction cepstral coefficients."""
    fs = clip.sample_rate_hz
    frame_len = int(round(frame_ms / 1000.0 * fs))
    hop = max(1, int(round(hop_ms / 1000.0 * fs)))
    if lpc_order >= frame_len:
        raise ValueError("lpc_order must be smaller than the frame")
    frames = frame_signal(clip.samples, frame_len, hop)
    window = np.hanning(frame_len)
    total = np.zeros(n_coeffs)
    used = 0
    for frame in frames:
        tapered = frame * window
        r = autocorrelation(tapered, lpc_order)
        if r[0] <= 0.0:
            continue  # silent frame contributes nothing
        a, _, _ = levinson_durbin(r, lpc_order)
        total += lpc_to_cepstrum(a, n_coeffs)
        used += 1
    if used == 0:
        raise SilentClip("no audible frames to model")
    return total / used


@dataclass(frozen=True)
class LivenessFeatureVector:
    """All four liveness feature groups for one verifier-side clip."""

    cum_power_fracs: np.ndarray
    peak_stats: PeakStats
    linearity_degree: float
    lpcc: np.ndarray

    def __post_init__(self):
        fracs = np.asarray(self.cum_power_fracs, dtype=np.float64)
        coeffs = np.asarray(self.lpcc, dtype=np.float64)
        fracs.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "cum_power_fracs", fracs)
        object.__setattr__(self, "lpcc", coeffs)
        if np.any(np.diff(fracs) < -1e-9):
            raise ValueError("cumulative fractions must be non-decreasing")

    def as_array(self) -> np.ndarray:
        """Fixed-length vector for the classifiers."""
        return np.concatenate([
            self.cum_power_fracs,
            [float(self.peak_stats.peak_count),
             self.peak_stats.mean_prominence_db,
             self.peak_stats.spectral_flatness,
             self.linearity_degree],
            self.lpcc,
        ])


def _linearity_degree(spec: Spectrum, low_hz: float = 100.0,
                      high_hz: float = 10000.0, n_bands: int = 16) -> float:
    """RMS residual (dB) of a straight-line fit to band power vs log-frequency.

    A single smooth decay fits a line well (small residual); a spectrum
    broken up by resonances and distortion products does not.
    """
    edges = np.geomspace(low_hz, min(high_hz, spec.bin_freq_hz[-1]), n_bands + 1)
    floor = max(float(np.max(spec.power)) * 1e-12, 1e-300)
    levels = []
    centers = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (spec.bin_freq_hz >= lo) & (spec.bin_freq_hz < hi)
        if not np.any(mask):
            continue
        levels.append(10.0 * np.log10(max(float(np.mean(spec.power[mask])), floor)))
        centers.append(np.log10(np.sqrt(lo * hi)))
    if len(levels) < 3:
        return 0.0
    levels = np.array(levels)
    centers = np.array(centers)
    slope, intercept = np.polyfit(centers, levels, 1)
    residual = levels - (slope * centers + intercept)
    return float(np.sqrt(np.mean(residual ** 2)))


def extract_liveness_features(clip: AudioClip, essential_band: BandSpec,
                              checkpoints_hz=DEFAULT_CHECKPOINTS_HZ,
                              lpc_order: int = DEFAULT_LPC_ORDER,
                              n_coeffs: int = DEFAULT_LPCC_COEFFS,
                              ) -> LivenessFeatureVector:
    """Assemble the full liveness feature vector for one clip."""
    if clip.duration_s < 1.0:
        raise ClipTooShort("liveness features need at least 1 s of audio")
    psd = power_spectral_density(clip, frame_len=4096, hop=2048,
                                 window=Window.HANN)
    nyquist = clip.sample_rate_hz / 2.0
    checkpoints = tuple(checkpoints_hz) + (nyquist,)
    fracs = cumulative_power_profile(psd, checkpoints)
    peaks = peak_pattern_features(psd, essential_band)
    linearity = _linearity_degree(psd)
    coeffs = lpcc(clip, lpc_order=lpc_order, n_coeffs=n_coeffs)
    return LivenessFeatureVector(fracs, peaks, linearity, coeffs)


def liveness_jsonl_record(vec: LivenessFeatureVector, label: int,
                          pair_id: str) -> dict:
    return {
        "kind": "liveness",
        "scores": [float(v) for v in vec.as_array()],
        "label": int(label),
        "pair_id": pair_id,
    }
