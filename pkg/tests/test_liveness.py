import numpy as np
import pytest
from scipy import signal as sp_signal

from h2auth.audio import AudioClip, Spectrum, power_spectral_density
from h2auth.errors import (
    ClipTooShort,
    EmptyBand,
    SilentClip,
    UnstableModel,
    ZeroTotalPower,
)
from h2auth.liveness import (
    autocorrelation,
    cumulative_power_profile,
    extract_liveness_features,
    levinson_durbin,
    lpc_to_cepstrum,
    lpcc,
    peak_pattern_features,
)
from h2auth.similarity import BandSpec
from h2auth.synth import (
    AttackKind,
    AttackSpec,
    DroneSpec,
    Environment,
    ScenarioSpec,
    generate_drone_noise,
    loudspeaker_replay,
    stage_scenario,
)

FS = 44100
ESSENTIAL = BandSpec(300.0, 500.0, "essential")


def test_cumulative_sine_below_first_checkpoint():
    t = np.arange(2 * FS) / FS
    clip = AudioClip(0.5 * np.sin(2 * np.pi * 400.0 * t), FS)
    psd = power_spectral_density(clip, frame_len=4096)
    fracs = cumulative_power_profile(psd, [500.0, 4500.0])
    assert fracs[0] == pytest.approx(1.0, abs=1e-3)
    assert fracs[1] == pytest.approx(1.0, abs=1e-6)


def test_cumulative_live_drone_fraction():
    out = stage_scenario(ScenarioSpec(drone=DroneSpec(370.0), seed=21))
    psd = power_spectral_density(out.verifier_side_clip, frame_len=4096)
    fracs = cumulative_power_profile(psd, [500.0])
    assert fracs[0] >= 0.70


def test_cumulative_replayed_drone_fraction():
    out = stage_scenario(ScenarioSpec(
        drone=DroneSpec(370.0),
        attack=AttackSpec(AttackKind.VERIFIER_RELAY, 70.0,
                          speaker_profile="compact"),
        seed=22))
    psd = power_spectral_density(out.verifier_side_clip, frame_len=4096)
    fracs = cumulative_power_profile(psd, [500.0, 4500.0])
    assert fracs[0] < 0.5
    assert 0.6 <= fracs[1] <= 0.92


def test_cumulative_validation():
    spec = Spectrum(np.arange(10.0), np.zeros(10), 1.0)
    with pytest.raises(ZeroTotalPower):
        cumulative_power_profile(spec, [5.0])
    spec2 = Spectrum(np.arange(10.0), np.ones(10), 1.0)
    with pytest.raises(ValueError):
        cumulative_power_profile(spec2, [5.0, 3.0])
    with pytest.raises(ValueError):
        cumulative_power_profile(spec2, [50.0])


def test_peaks_single_sine():
    t = np.arange(2 * FS) / FS
    clip = AudioClip(0.4 * np.sin(2 * np.pi * 400.0 * t), FS)
    psd = power_spectral_density(clip, frame_len=4096)
    stats = peak_pattern_features(psd, ESSENTIAL)
    assert stats.peak_count == 1
    assert stats.spectral_flatness < 0.05


def test_peaks_white_noise_flat():
    rng = np.random.default_rng(23)
    clip = AudioClip(rng.standard_normal(4 * FS) * 0.1, FS)
    psd = power_spectral_density(clip, frame_len=1024)
    stats = peak_pattern_features(psd, ESSENTIAL)
    assert stats.spectral_flatness > 0.8


def test_peaks_empty_band():
    psd = power_spectral_density(AudioClip(np.ones(FS) * 0.1, FS),
                                 frame_len=4096)
    with pytest.raises(EmptyBand):
        peak_pattern_features(psd, BandSpec(300.0, 300.001))


def test_replay_adds_in_band_peaks():
    more = 0
    trials = 30
    for seed in range(trials):
        clip, _ = generate_drone_noise(DroneSpec(370.0, imperfection_seed=1),
                                       3.0, FS, seed)
        replated = loudspeaker_replay(clip, 70.0, seed=seed)
        live = peak_pattern_features(
            power_spectral_density(clip, frame_len=4096), ESSENTIAL)
        rep = peak_pattern_features(
            power_spectral_density(replated, frame_len=4096), ESSENTIAL)
        more += rep.peak_count > live.peak_count
    assert more >= int(0.9 * trials)


# --- LPC / LPCC --------------------------------------------------------------

def _ar_signal(coeffs, n, seed):
    rng = np.random.default_rng(seed)
    return sp_signal.lfilter([1.0], np.concatenate([[1.0], -np.asarray(coeffs)]),
                             rng.standard_normal(n))


def test_levinson_recovers_ar2():
    true = np.array([1.2, -0.6])
    x = _ar_signal(true, 200000, seed=31)
    r = autocorrelation(x, 2)
    a, _, _ = levinson_durbin(r, 2)
    assert np.max(np.abs(a - true) / np.abs(true)) < 0.05


def test_levinson_recovers_ar4():
    true = np.array([0.9, -0.5, 0.3, -0.2])
    x = _ar_signal(true, 400000, seed=32)
    a, _, _ = levinson_durbin(autocorrelation(x, 4), 4)
    assert np.max(np.abs(a - true) / np.abs(true)) < 0.05


def test_levinson_normal_equations():
    rng = np.random.default_rng(33)
    x = rng.standard_normal(4096)
    order = 12
    r = autocorrelation(x, order)
    a, _, _ = levinson_durbin(r, order)
    R = np.array([[r[abs(i - j)] for j in range(order)] for i in range(order)])
    residual = R @ a - r[1:order + 1]
    assert np.linalg.norm(residual) / np.linalg.norm(r[1:order + 1]) <= 1e-8


def test_white_noise_reflection_coefficients():
    rng = np.random.default_rng(34)
    ks = []
    for _ in range(100):
        x = rng.standard_normal(1102)
        _, k, _ = levinson_durbin(autocorrelation(x, 10), 10)
        ks.append(k)
    assert np.all(np.abs(np.mean(ks, axis=0)) < 0.2)


def test_levinson_zero_power():
    with pytest.raises(UnstableModel):
        levinson_durbin(np.zeros(5), 4)


def test_lpcc_gain_invariance():
    clip, _ = generate_drone_noise(DroneSpec(370.0), 1.5, FS, seed=35)
    half = AudioClip(clip.samples * 0.5, FS)
    c1 = lpcc(clip)
    c2 = lpcc(half)
    assert np.max(np.abs(c1 - c2)) < 1e-9


def test_lpcc_silent_clip():
    with pytest.raises(SilentClip):
        lpcc(AudioClip(np.zeros(FS), FS))


def test_lpcc_order_bounds():
    clip = AudioClip(np.random.default_rng(0).standard_normal(FS) * 0.1, FS)
    with pytest.raises(ValueError):
        lpcc(clip, lpc_order=2000, frame_ms=25.0)


def test_cepstrum_recursion_against_log_spectrum():
    # cepstral coefficients of 1/A(z) equal the inverse-DFT of log|1/A|
    a = np.array([0.8, -0.3])
    c = lpc_to_cepstrum(a, 24)
    nfft = 4096
    spectrum = np.fft.rfft(np.concatenate([[1.0], -a]), nfft)
    log_mag = -np.log(np.abs(spectrum))
    cepstrum = np.fft.irfft(log_mag, nfft)
    assert np.max(np.abs(c - 2.0 * cepstrum[1:25])) < 1e-6


# --- assembled feature vector -------------------------------------------------

def test_extract_deterministic_and_fixed_length():
    clip, _ = generate_drone_noise(DroneSpec(370.0), 1.2, FS, seed=36)
    v1 = extract_liveness_features(clip, ESSENTIAL)
    v2 = extract_liveness_features(clip, ESSENTIAL)
    assert np.array_equal(v1.as_array(), v2.as_array())

    longer, _ = generate_drone_noise(DroneSpec(370.0), 2.7, FS, seed=37)
    v3 = extract_liveness_features(longer, ESSENTIAL)
    assert v3.as_array().shape == v1.as_array().shape


def test_extract_requires_one_second():
    clip, _ = generate_drone_noise(DroneSpec(370.0), 0.5, FS, seed=38)
    with pytest.raises(ClipTooShort):
        extract_liveness_features(clip, ESSENTIAL)


def test_cumulative_profile_monotone_terminal_one():
    out = stage_scenario(ScenarioSpec(drone=DroneSpec(390.0),
                                      environment=Environment.PARTY, seed=39))
    vec = extract_liveness_features(out.verifier_side_clip, ESSENTIAL)
    assert np.all(np.diff(vec.cum_power_fracs) >= -1e-12)
    assert vec.cum_power_fracs[-1] == pytest.approx(1.0, abs=1e-9)


def test_amplitude_invariance_of_features():
    clip, _ = generate_drone_noise(DroneSpec(370.0), 1.5, FS, seed=40)
    scaled = AudioClip(clip.samples * 0.25, FS)
    v1 = extract_liveness_features(clip, ESSENTIAL).as_array()
    v2 = extract_liveness_features(scaled, ESSENTIAL).as_array()
    assert np.max(np.abs(v1 - v2)) < 1e-6


def test_live_vs_replay_training_error(speaker_training):
    from h2auth.classify import train_linear_svm, decision_scores

    X, meta = speaker_training
    y = meta["presence"]
    model = train_linear_svm(X, y)
    scores = decision_scores(model, X)
    decisions = scores >= model.threshold
    assert np.mean(decisions != (y == 1)) <= 0.05
