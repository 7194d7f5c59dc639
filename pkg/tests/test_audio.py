import struct

import numpy as np
import pytest

from h2auth.audio import (
    AudioClip,
    Origin,
    Spectrum,
    Window,
    frame_signal,
    load_wav,
    power_spectral_density,
    save_wav,
    spectrogram,
)
from h2auth.errors import (
    ClipTooShort,
    CorruptHeader,
    SampleOutOfRange,
    UnsupportedFormat,
)
from h2auth.synth import harmonic_stack

FS = 44100


def test_silence_roundtrip(tmp_path):
    path = tmp_path / "silence.wav"
    save_wav(AudioClip(np.zeros(FS), FS), path)
    clip = load_wav(path)
    assert len(clip) == FS
    assert clip.sample_rate_hz == FS
    assert np.all(clip.samples == 0.0)


def test_full_scale_square_wave(tmp_path):
    raw = np.tile([32767, -32767], FS // 2).astype("<i2")
    path = tmp_path / "square.wav"
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + raw.nbytes,
                         b"WAVE", b"fmt ", 16, 1, 1, FS, FS * 2, 2, 16,
                         b"data", raw.nbytes)
    path.write_bytes(header + raw.tobytes())
    clip = load_wav(path)
    assert np.all(np.abs(clip.samples) == 32767 / 32768)
    assert abs(abs(clip.samples[0]) - 0.99997) < 1e-5


def test_roundtrip_error_bound(tmp_path):
    rng = np.random.default_rng(3)
    clip = AudioClip(rng.uniform(-1.0, 1.0, 3 * FS), FS)
    path = tmp_path / "rt.wav"
    save_wav(clip, path)
    back = load_wav(path)
    assert np.max(np.abs(back.samples - clip.samples)) <= 1.0 / 32768


def test_empty_clip_roundtrip(tmp_path):
    path = tmp_path / "empty.wav"
    save_wav(AudioClip(np.array([]), FS), path)
    assert len(load_wav(path)) == 0


def test_save_rejects_out_of_range(tmp_path):
    clip = AudioClip(np.array([0.0, 1.5]), FS)
    with pytest.raises(SampleOutOfRange):
        save_wav(clip, tmp_path / "bad.wav")


def _wav_bytes(channels=1, bits=16, fmt_tag=1, n=100, rate=FS):
    bytes_per = bits // 8
    data = bytes(n * bytes_per * channels)
    return struct.pack(
        "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(data), b"WAVE", b"fmt ", 16,
        fmt_tag, channels, rate, rate * bytes_per * channels,
        bytes_per * channels, bits, b"data", len(data)) + data


def test_load_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    path.write_bytes(_wav_bytes(channels=2))
    with pytest.raises(UnsupportedFormat):
        load_wav(path)


def test_load_rejects_8bit(tmp_path):
    path = tmp_path / "8bit.wav"
    path.write_bytes(_wav_bytes(bits=8))
    with pytest.raises(UnsupportedFormat):
        load_wav(path)


def test_load_rejects_compressed(tmp_path):
    path = tmp_path / "float.wav"
    path.write_bytes(_wav_bytes(fmt_tag=3))
    with pytest.raises(UnsupportedFormat):
        load_wav(path)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "garbage.wav"
    path.write_bytes(b"not a wav file at all")
    with pytest.raises(CorruptHeader):
        load_wav(path)


def test_load_rejects_truncated(tmp_path):
    path = tmp_path / "trunc.wav"
    path.write_bytes(_wav_bytes()[:30])
    with pytest.raises(CorruptHeader):
        load_wav(path)


def test_pcm_bytes_roundtrip():
    rng = np.random.default_rng(4)
    clip = AudioClip(rng.uniform(-0.9, 0.9, 1000), FS)
    back = AudioClip.from_pcm_bytes(clip.to_pcm_bytes(), FS)
    assert np.max(np.abs(back.samples - clip.samples)) <= 1.0 / 32768


# --- spectra -----------------------------------------------------------------

def test_psd_sine_peak():
    t = np.arange(2 * FS) / FS
    clip = AudioClip(0.5 * np.sin(2 * np.pi * 1000.0 * t), FS)
    psd = power_spectral_density(clip, frame_len=4096, window=Window.HANN)
    peak_hz = psd.bin_freq_hz[np.argmax(psd.power)]
    assert abs(peak_hz - 1000.0) <= psd.resolution_hz
    peak_db = 10 * np.log10(psd.power.max())
    median_db = 10 * np.log10(np.median(psd.power[psd.power > 0]))
    assert peak_db - median_db >= 40.0


def test_psd_white_noise_flat():
    rng = np.random.default_rng(11)
    avg = None
    for _ in range(100):
        clip = AudioClip(rng.uniform(-0.5, 0.5, FS // 2), FS)
        psd = power_spectral_density(clip, frame_len=1024, window=Window.HANN)
        avg = psd.power if avg is None else avg + psd.power
    bands = np.array_split(avg[1:], 10)
    band_means = np.array([b.mean() for b in bands])
    assert band_means.max() / band_means.min() < 3.0


def test_psd_zero_signal():
    psd = power_spectral_density(AudioClip(np.zeros(FS), FS), frame_len=4096)
    assert np.all(psd.power == 0.0)


def test_psd_clip_too_short():
    with pytest.raises(ClipTooShort):
        power_spectral_density(AudioClip(np.zeros(100), FS), frame_len=4096)


def test_parseval_rect_window():
    rng = np.random.default_rng(12)
    for frame_len in (4096, 3000):
        x = rng.standard_normal(frame_len) * 0.2
        psd = power_spectral_density(AudioClip(x, FS), frame_len=frame_len,
                                     hop=frame_len, window=Window.RECT)
        total = np.sum(psd.power) * psd.resolution_hz
        mean_square = np.mean(x ** 2)
        assert abs(total - mean_square) / mean_square < 1e-6


def test_fft_roundtrip_precision():
    rng = np.random.default_rng(13)
    x = rng.standard_normal(2 ** 16)
    back = np.fft.irfft(np.fft.rfft(x), 2 ** 16)
    assert np.max(np.abs(back - x)) < 1e-9


def test_frame_count_exact():
    for n, frame, hop in ((1000, 256, 128), (44100, 4096, 2048),
                          (500, 500, 100)):
        frames = frame_signal(np.zeros(n), frame, hop)
        assert len(frames) == (n - frame) // hop + 1


def test_spectrogram_chirp_monotone():
    t = np.arange(2 * FS) / FS
    phase = 2 * np.pi * (300.0 * t + (500.0 - 300.0) / (2 * 2.0) * t ** 2)
    clip = AudioClip(0.5 * np.sin(phase), FS)
    frames = spectrogram(clip, frame_len=8192, hop=4096)
    peaks = [f.bin_freq_hz[np.argmax(f.power)] for f in frames]
    assert all(b >= a for a, b in zip(peaks, peaks[1:]))
    assert peaks[-1] > peaks[0] + 100


def test_spectrogram_stationary_sine():
    t = np.arange(2 * FS) / FS
    clip = AudioClip(0.3 * np.sin(2 * np.pi * 440.0 * t), FS)
    frames = spectrogram(clip, frame_len=4096, hop=2048)
    peak_bins = {int(np.argmax(f.power)) for f in frames}
    assert len(peak_bins) == 1


def test_spectrogram_follows_commanded_f0():
    n = 2 * FS
    f0 = np.linspace(320.0, 480.0, n)
    wave = harmonic_stack(f0, [1.0], FS)
    clip = AudioClip(0.5 * wave / np.max(np.abs(wave)), FS)
    frames = spectrogram(clip, frame_len=8192, hop=4096)
    hop, frame_len = 4096, 8192
    for i, frame in enumerate(frames):
        commanded = f0[i * hop: i * hop + frame_len].mean()
        peak = frame.bin_freq_hz[np.argmax(frame.power)]
        assert abs(peak - commanded) <= frame.resolution_hz


def test_spectrum_invariants():
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 1.0]), np.array([1.0, -0.5]), 1.0)
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 1.0]), np.array([1.0, 0.5]), 1.0)
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 1.0]), np.array([1.0]), 1.0)


def test_clip_origin_and_duration():
    clip = AudioClip(np.zeros(22050), FS, Origin.DRONE_SIDE)
    assert clip.duration_s == pytest.approx(0.5)
    assert clip.origin is Origin.DRONE_SIDE
    with pytest.raises(ValueError):
        AudioClip(np.zeros((2, 10)), FS)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), 0)
