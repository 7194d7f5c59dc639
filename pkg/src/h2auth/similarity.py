"""Band-limited cross-correlation similarity between two simultaneous recordings.

Scores are max normalized cross-correlation per frequency band, either over
the 32 standard one-third-octave bands or over M equal sub-bands of the
narrow range holding the drone's essential frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .audio import AudioClip, Window, power_spectral_density
from .errors import (
    EmptyInput,
    DurationMismatch,
    InvalidConfig,
    LengthMismatch,
    SampleRateMismatch,
    SampleRateTooLow,
    SingleClassData,
    ZeroEnergySignal,
)

#: Default lag search window. Sound travels under ~17 m in 50 ms, which
#: generously covers the distances the pipeline is meant for.
DEFAULT_MAX_LAG_MS = 50.0

#: Allowed start-time slack between the two recordings; longer clips are
#: truncated to the shorter one within this budget.
DURATION_SLACK_S = 0.010

#: A band-limited correlation has alternating-sign lobes of nearly equal
#: magnitude spaced half a period apart; among lags within this fraction of
#: the peak magnitude, the in-phase (most positive) one is reported.
ENVELOPE_TIE_TOL = 0.05


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def cross_correlation(x, y, max_lag: int) -> np.ndarray:
    """Lag-indexed cross-correlation of two equal-length signals.

    Returns values for lags -max_lag..max_lag (array index ``lag + max_lag``),
    where the value at lag ``l`` is ``sum_i x[i] * y[i + l]`` with zeros
    outside the signal. A positive argmax lag means y is a delayed copy of x.
    Computed via the Fourier identity ``ifft(conj(fft(x)) * fft(y))``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("signals must be 1-D")
    if x.size == 0 or y.size == 0:
        raise EmptyInput("cross-correlation of empty signals")
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    max_lag = int(max_lag)
    if max_lag < 0 or max_lag >= x.size:
        raise ValueError("max_lag must satisfy 0 <= max_lag < len")
    nfft = _next_pow2(x.size + max_lag)
    full = np.fft.irfft(np.conj(np.fft.rfft(x, nfft)) * np.fft.rfft(y, nfft),
                        nfft)
    out = np.empty(2 * max_lag + 1)
    if max_lag > 0:
        out[:max_lag] = full[nfft - max_lag:]   # negative lags
    out[max_lag:] = full[:max_lag + 1]          # lags 0..max_lag
    return out


def _peak_score(corr: np.ndarray) -> tuple[float, int]:
    """Signed correlation value at the peak-magnitude lag, preferring the
    in-phase lobe among near-equal-magnitude neighbors."""
    magnitudes = np.abs(corr)
    peak = magnitudes.max()
    candidates = np.flatnonzero(magnitudes >= (1.0 - ENVELOPE_TIE_TOL) * peak)
    idx = int(candidates[np.argmax(corr[candidates])])
    return float(np.clip(corr[idx], -1.0, 1.0)), idx


def normalized_xcorr_max(x, y, max_lag: int) -> tuple[float, int]:
    """Peak normalized cross-correlation and the lag where it occurs.

    The correlation is divided by the geometric mean of the two signal
    energies, so the result lies in [-1, 1]; the returned score is the
    signed value at the lag of maximum magnitude (in-phase lobe preferred
    on near ties).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    energy_x = float(np.dot(x, x))
    energy_y = float(np.dot(y, y))
    if energy_x == 0.0 or energy_y == 0.0:
        raise ZeroEnergySignal("a signal with no energy has no correlation shape")
    corr = cross_correlation(x, y, max_lag) / np.sqrt(energy_x * energy_y)
    score, idx = _peak_score(corr)
    return score, idx - max_lag


@dataclass(frozen=True)
class BandSpec:
    """A frequency band [low_hz, high_hz)."""

    low_hz: float
    high_hz: float
    label: str = ""

    def __post_init__(self):
        if not (0.0 < self.low_hz < self.high_hz):
            raise InvalidConfig(
                f"band edges must satisfy 0 < low < high, got "
                f"[{self.low_hz}, {self.high_hz}]"
            )


#: Nominal center labels of the 32-band set, ordered low to high.
_THIRD_OCTAVE_LABELS = (
    "12.5", "16", "20", "25", "31.5", "40", "50", "63", "80", "100",
    "125", "160", "200", "250", "315", "400", "500", "630", "800", "1000",
    "1250", "1600", "2000", "2500", "3150", "4000", "5000", "6300", "8000",
    "10000", "12500", "16000",
)

# Base-10 third-octave band indices: center of band n is 10^(n/10) Hz.
_THIRD_OCTAVE_FIRST_INDEX = 11
_THIRD_OCTAVE_COUNT = 32


def third_octave_bands(sample_rate_hz: int) -> list[BandSpec]:
    """The 32-band one-third-octave filter bank (base-10 edges).

    Ten octave bands are split in three plus two more bands covering the
    lower part of the final octave, whose top third would exceed Nyquist
    at the canonical 44.1 kHz rate. Adjacent bands tile exactly.
    """
    n = np.arange(_THIRD_OCTAVE_FIRST_INDEX,
                  _THIRD_OCTAVE_FIRST_INDEX + _THIRD_OCTAVE_COUNT + 1)
    edges = 10.0 ** ((n - 0.5) / 10.0)
    if sample_rate_hz < 2.0 * edges[-1]:
        raise SampleRateTooLow(
            f"sample rate {sample_rate_hz} Hz cannot carry the top band "
            f"edge {edges[-1]:.0f} Hz"
        )
    return [
        BandSpec(edges[i], edges[i + 1], _THIRD_OCTAVE_LABELS[i])
        for i in range(_THIRD_OCTAVE_COUNT)
    ]


@dataclass(frozen=True)
class EssentialBandConfig:
    """The N-Hz-wide range covering a drone's essential frequencies,
    divided into m_parts equal sub-bands."""

    center_band_low_hz: float = 300.0
    center_band_high_hz: float = 500.0
    m_parts: int = 5

    def __post_init__(self):
        if self.m_parts < 1:
            raise InvalidConfig("m_parts must be >= 1")
        if not (0.0 < self.center_band_low_hz < self.center_band_high_hz):
            raise InvalidConfig("band range must satisfy 0 < low < high")

    @property
    def width_hz(self) -> float:
        return self.center_band_high_hz - self.center_band_low_hz


DEFAULT_ESSENTIAL_CONFIG = EssentialBandConfig()


def essential_bands(cfg: EssentialBandConfig = DEFAULT_ESSENTIAL_CONFIG
                    ) -> list[BandSpec]:
    """M contiguous equal-width sub-bands covering the essential range."""
    edges = np.linspace(cfg.center_band_low_hz, cfg.center_band_high_hz,
                        cfg.m_parts + 1)
    return [
        BandSpec(edges[i], edges[i + 1], f"ess{i + 1}/{cfg.m_parts}")
        for i in range(cfg.m_parts)
    ]


@dataclass(frozen=True)
class BandFeatureVector:
    """Per-band peak normalized cross-correlation scores."""

    scores: np.ndarray
    bands: tuple[BandSpec, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "bands", tuple(self.bands))
        if len(scores) != len(self.bands):
            raise ValueError("one score per band required")
        if scores.size and (np.max(scores) > 1.0 or np.min(scores) < -1.0):
            raise ValueError("scores must lie in [-1, 1]")


def to_jsonl_record(vec: BandFeatureVector, label: int, pair_id: str) -> dict:
    return {
        "kind": "similarity",
        "bands": [[b.low_hz, b.high_hz] for b in vec.bands],
        "scores": [float(s) for s in vec.scores],
        "label": int(label),
        "pair_id": pair_id,
    }


class BandCorrelator:
    """Band-pass + peak-NCC feature extraction with reusable per-clip state.

    Filters are 4th-order Butterworth applied forward-backward, so filtering
    is zero-phase and does not move the correlation peak. Clip state (band
    FFTs and energies) can be computed once and correlated against many
    partners; `band_feature_vector` is the one-shot convenience wrapper.
    """

    def __init__(self, bands, sample_rate_hz: int,
                 max_lag_ms: float = DEFAULT_MAX_LAG_MS):
        self.bands = tuple(bands)
        self.sample_rate_hz = int(sample_rate_hz)
        self.max_lag = int(round(max_lag_ms / 1000.0 * sample_rate_hz))
        nyquist = sample_rate_hz / 2.0
        self._sos = []
        for band in self.bands:
            if band.high_hz >= nyquist:
                raise SampleRateTooLow(
                    f"band [{band.low_hz:.0f}, {band.high_hz:.0f}] needs a "
                    f"rate above {2 * band.high_hz:.0f} Hz"
                )
            self._sos.append(sp_signal.butter(
                4, [band.low_hz, band.high_hz], btype="bandpass",
                fs=sample_rate_hz, output="sos"))

    def clip_state(self, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stacked per-band (rfft, energy) of the mean-removed, band-filtered
        clip; one rfft call covers all bands."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size == 0:
            raise EmptyInput("cannot extract features from an empty clip")
        centered = samples - samples.mean()
        nfft = _next_pow2(samples.size + self.max_lag)
        filtered = np.stack([sp_signal.sosfiltfilt(sos, centered)
                             for sos in self._sos])
        energies = np.einsum("ij,ij->i", filtered, filtered)
        return np.fft.rfft(filtered, nfft, axis=1), energies

    def scores_from_states(self, state_x, state_y, n_samples: int) -> np.ndarray:
        nfft = _next_pow2(n_samples + self.max_lag)
        fx, ex = state_x
        fy, ey = state_y
        full = np.fft.irfft(np.conj(fx) * fy, nfft, axis=1)
        corr = np.concatenate((full[:, nfft - self.max_lag:],
                               full[:, :self.max_lag + 1]), axis=1)
        scores = np.empty(len(self.bands))
        for i in range(len(self.bands)):
            if ex[i] == 0.0 or ey[i] == 0.0:
                scores[i] = 0.0  # zero-energy band carries no information
                continue
            scores[i], _ = _peak_score(corr[i] / np.sqrt(ex[i] * ey[i]))
        return scores

    def features(self, c: AudioClip, d: AudioClip) -> BandFeatureVector:
        xc, xd = _aligned_samples(c, d, self.sample_rate_hz)
        scores = self.scores_from_states(self.clip_state(xc),
                                         self.clip_state(xd), len(xc))
        return BandFeatureVector(scores, self.bands)


def _aligned_samples(c: AudioClip, d: AudioClip,
                     sample_rate_hz: int) -> tuple[np.ndarray, np.ndarray]:
    if c.sample_rate_hz != d.sample_rate_hz:
        raise SampleRateMismatch(
            f"{c.sample_rate_hz} Hz vs {d.sample_rate_hz} Hz"
        )
    if c.sample_rate_hz != sample_rate_hz:
        raise SampleRateMismatch(
            f"clips at {c.sample_rate_hz} Hz, correlator at {sample_rate_hz} Hz"
        )
    slack = int(round(DURATION_SLACK_S * sample_rate_hz))
    if abs(len(c) - len(d)) > slack:
        raise DurationMismatch(
            f"durations differ by {abs(len(c) - len(d))} samples "
            f"(> {slack} allowed)"
        )
    n = min(len(c), len(d))
    return c.samples[:n], d.samples[:n]


def band_feature_vector(c: AudioClip, d: AudioClip, bands,
                        max_lag_ms: float = DEFAULT_MAX_LAG_MS
                        ) -> BandFeatureVector:
    """Band-pass both clips, then take the peak normalized cross-correlation
    in each band. Bands with no energy on either side score 0."""
    return BandCorrelator(bands, c.sample_rate_hz, max_lag_ms).features(c, d)


@dataclass(frozen=True)
class EssentialFrequencyEstimate:
    frequency_hz: float
    prominence_db: float
    low_confidence: bool


def estimate_essential_frequency(clip: AudioClip,
                                 search_low_hz: float = 200.0,
                                 search_high_hz: float = 800.0,
                                 frame_len: int = 8192,
                                 ) -> EssentialFrequencyEstimate:
    """Locate the strongest spectral peak in the search range.

    The PSD argmax is refined to sub-bin precision with a parabolic fit on
    the dB spectrum. An estimate whose peak rises less than 6 dB above the
    in-range median is flagged low-confidence (no dominant tone).
    """
    nyquist = clip.sample_rate_hz / 2.0
    if not (0.0 <= search_low_hz < search_high_hz <= nyquist):
        raise InvalidConfig("search range must lie inside Nyquist")
    psd = power_spectral_density(clip, frame_len=frame_len,
                                 hop=frame_len // 2, window=Window.HANN,
                                 nfft=4 * _next_pow2(frame_len))
    mask = (psd.bin_freq_hz >= search_low_hz) & (psd.bin_freq_hz <= search_high_hz)
    power = psd.power[mask]
    freqs = psd.bin_freq_hz[mask]
    if power.size == 0 or not np.any(power > 0.0):
        raise ZeroEnergySignal("no spectral power in the search range")

    k = int(np.argmax(power))
    floor = np.max(power) * 1e-12
    log_power = 10.0 * np.log10(np.maximum(power, floor))
    if 0 < k < power.size - 1:
        alpha, beta, gamma = log_power[k - 1:k + 2]
        denom = alpha - 2.0 * beta + gamma
        delta = 0.0 if denom == 0.0 else 0.5 * (alpha - gamma) / denom
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    frequency = freqs[k] + delta * psd.resolution_hz

    median = float(np.median(power))
    if median <= 0.0:
        prominence_db = np.inf
    else:
        prominence_db = 10.0 * np.log10(power[k] / median)
    return EssentialFrequencyEstimate(float(frequency), float(prominence_db),
                                      bool(prominence_db < 6.0))


def fisher_scores(features, labels) -> np.ndarray:
    """Per-feature Fisher score (between-class over within-class variance),
    normalized so the best feature scores 1.

    A feature with zero within-class variance in both classes scores 0 by
    convention.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    classes = np.unique(y)
    if classes.size != 2:
        raise SingleClassData(f"need exactly 2 classes, got {classes.size}")

    overall_mean = X.mean(axis=0)
    numer = np.zeros(X.shape[1])
    denom = np.zeros(X.shape[1])
    for cls in classes:
        rows = X[y == cls]
        n_c = len(rows)
        numer += n_c * (rows.mean(axis=0) - overall_mean) ** 2
        denom += n_c * rows.var(axis=0)

    scores = np.zeros(X.shape[1])
    ok = denom > 0.0
    scores[ok] = numer[ok] / denom[ok]
    top = scores.max()
    if top > 0.0:
        scores /= top
    return scores
