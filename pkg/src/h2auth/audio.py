"""Audio container, 16-bit mono WAV I/O, framing, and power-spectrum primitives."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClipTooShort,
    CorruptHeader,
    SampleOutOfRange,
    UnsupportedFormat,
)

#: Canonical pipeline sample rate. All cross-clip operations require both
#: clips at the same rate; there is no resampler.
CANONICAL_RATE_HZ = 44100

_PCM_SCALE = 32768  # int16 full scale used for normalization


class Origin(enum.Enum):
    DRONE_SIDE = "drone_side"
    VERIFIER_SIDE = "verifier_side"
    SYNTHETIC = "synthetic"
    UNKNOWN = "unknown"


class Window(enum.Enum):
    HANN = "hann"
    RECT = "rect"


@dataclass(frozen=True)
class AudioClip:
    """Uniformly sampled mono audio, amplitudes nominally in [-1, 1].

    Values are immutable after construction and safe to share between
    threads. Range is enforced at the I/O boundaries (see save_wav), not
    here, so intermediate synthesis results can be inspected before
    normalization.
    """

    samples: np.ndarray
    sample_rate_hz: int
    origin: Origin = Origin.UNKNOWN

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be a 1-D sequence")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def to_pcm_bytes(self) -> bytes:
        """Quantize to little-endian 16-bit PCM (the WAV data-chunk layout)."""
        return _quantize(self.samples).tobytes()

    @classmethod
    def from_pcm_bytes(cls, data: bytes, sample_rate_hz: int,
                       origin: Origin = Origin.UNKNOWN) -> "AudioClip":
        raw = np.frombuffer(data, dtype="<i2")
        return cls(raw.astype(np.float64) / _PCM_SCALE, sample_rate_hz, origin)

    def quantized(self) -> "AudioClip":
        """Round-trip through 16-bit PCM; both protocol endpoints decide on
        this form so that their float inputs are bit-identical."""
        return AudioClip.from_pcm_bytes(self.to_pcm_bytes(), self.sample_rate_hz,
                                        self.origin)


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectral density: power per Hz at each bin center."""

    bin_freq_hz: np.ndarray
    power: np.ndarray
    resolution_hz: float

    def __post_init__(self):
        freqs = np.asarray(self.bin_freq_hz, dtype=np.float64)
        power = np.asarray(self.power, dtype=np.float64)
        if freqs.shape != power.shape:
            raise ValueError("bin_freq_hz and power must have equal length")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("bins must be strictly increasing")
        if np.any(power < 0):
            raise ValueError("power must be non-negative")
        freqs.setflags(write=False)
        power.setflags(write=False)
        object.__setattr__(self, "bin_freq_hz", freqs)
        object.__setattr__(self, "power", power)

    def total_power(self) -> float:
        """Integrated power (mean-square amplitude equivalent)."""
        return float(np.sum(self.power) * self.resolution_hz)


def _quantize(samples: np.ndarray) -> np.ndarray:
    if samples.size and (np.max(samples) > 1.0 or np.min(samples) < -1.0):
        raise SampleOutOfRange(
            f"sample peak {np.max(np.abs(samples)):.6f} exceeds full scale"
        )
    q = np.round(samples * _PCM_SCALE)
    np.clip(q, -_PCM_SCALE, _PCM_SCALE - 1, out=q)
    return q.astype("<i2")


def save_wav(clip: AudioClip, path) -> None:
    """Write a 16-bit PCM mono RIFF/WAVE file."""
    data = _quantize(clip.samples).tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16,
        1,                          # PCM format tag
        1,                          # mono
        clip.sample_rate_hz,
        clip.sample_rate_hz * 2,    # byte rate
        2,                          # block align
        16,                         # bits per sample
        b"data", len(data),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def load_wav(path, origin: Origin = Origin.UNKNOWN) -> AudioClip:
    """Read a 16-bit PCM mono WAV; samples are divided by 32768."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid, size = struct.unpack_from("<4sI", blob, pos)
        pos += 8
        chunk = blob[pos:pos + size]
        if cid == b"fmt ":
            if len(chunk) < 16:
                raise CorruptHeader(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", chunk, 0)
        elif cid == b"data":
            if len(chunk) < size:
                raise CorruptHeader(f"{path}: truncated data chunk")
            data = chunk
        pos += size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise CorruptHeader(f"{path}: missing fmt or data chunk")
    tag, channels, rate, _, _, bits = fmt
    if tag != 1:
        raise UnsupportedFormat(f"{path}: compressed WAV (format tag {tag})")
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels, need mono")
    if bits != 16:
        raise UnsupportedFormat(f"{path}: {bits}-bit samples, need 16")
    return AudioClip.from_pcm_bytes(data, rate, origin)


def frame_signal(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Strided view of shape (n_frames, frame_len); count is
    floor((len - frame_len)/hop) + 1."""
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if frame_len > len(samples):
        raise ClipTooShort(
            f"clip of {len(samples)} samples shorter than frame {frame_len}"
        )
    n_frames = (len(samples) - frame_len) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(samples, frame_len)
    return view[::hop][:n_frames]


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _frame_psd(frames: np.ndarray, sample_rate_hz: int, window: Window,
               nfft: int | None = None
               ) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-frame one-sided PSD (power/Hz). FFT length is the next power of
    two; frames are zero-padded up, which does not change the integral."""
    frame_len = frames.shape[1]
    if nfft is None:
        nfft = _next_pow2(frame_len)
    elif nfft < frame_len or nfft & (nfft - 1):
        raise ValueError("nfft must be a power of two >= frame_len")
    if window is Window.HANN:
        win = np.hanning(frame_len)
    else:
        win = np.ones(frame_len)
    spec = np.fft.rfft(frames * win, nfft)
    # density scaling: sum(power) * df == mean-square of the frame (Rect)
    scale = 1.0 / (sample_rate_hz * np.sum(win ** 2))
    power = (np.abs(spec) ** 2) * scale
    power[:, 1:] *= 2.0
    if nfft % 2 == 0:
        power[:, -1] /= 2.0
    df = sample_rate_hz / nfft
    freqs = np.arange(power.shape[1]) * df
    return freqs, power, df


def power_spectral_density(clip: AudioClip, frame_len: int = 4096,
                           hop: int | None = None,
                           window: Window = Window.HANN,
                           nfft: int | None = None) -> Spectrum:
    """Welch-style average of per-frame magnitude-squared FFTs.

    nfft beyond frame_len oversamples the spectrum (finer bin spacing at
    unchanged resolution), which peak interpolation benefits from.
    """
    if hop is None:
        hop = frame_len // 2
    frames = frame_signal(clip.samples, frame_len, hop)
    freqs, power, df = _frame_psd(frames, clip.sample_rate_hz, window, nfft)
    return Spectrum(freqs, power.mean(axis=0), df)


def spectrogram(clip: AudioClip, frame_len: int = 4096,
                hop: int | None = None,
                window: Window = Window.HANN) -> list[Spectrum]:
    """Per-frame Spectrum sequence (no averaging)."""
    if hop is None:
        hop = frame_len // 2
    frames = frame_signal(clip.samples, frame_len, hop)
    freqs, power, df = _frame_psd(frames, clip.sample_rate_hz, window)
    return [Spectrum(freqs, row, df) for row in power]
