import numpy as np
import pytest

from h2auth.audio import AudioClip
from h2auth.errors import (
    EmptyInput,
    DurationMismatch,
    InvalidConfig,
    LengthMismatch,
    SampleRateMismatch,
    SampleRateTooLow,
    SingleClassData,
    ZeroEnergySignal,
)
from h2auth.similarity import (
    BandFeatureVector,
    BandSpec,
    EssentialBandConfig,
    band_feature_vector,
    cross_correlation,
    essential_bands,
    estimate_essential_frequency,
    fisher_scores,
    normalized_xcorr_max,
    third_octave_bands,
    to_jsonl_record,
)
from h2auth.synth import CorpusPlan, DroneSpec, generate_drone_noise, stage_scenario
from h2auth.corpus import corpus_similarity_features

FS = 44100


def direct_xcorr(x, y, max_lag):
    """Brute-force lag sum, the independent oracle for the FFT path."""
    n = len(x)
    out = np.zeros(2 * max_lag + 1)
    for i, lag in enumerate(range(-max_lag, max_lag + 1)):
        lo = max(0, -lag)
        hi = min(n, n - lag)
        out[i] = np.dot(x[lo:hi], y[lo + lag:hi + lag])
    return out


def test_impulse_identity():
    x = np.zeros(8)
    x[0] = 1.0
    assert np.array_equal(cross_correlation(x, x, 2), [0, 0, 1, 0, 0])


def test_lag_zero_dot_product():
    assert cross_correlation([1, 2, 3], [1, 2, 3], 0)[0] == pytest.approx(14.0)


def test_fft_equals_direct_eq1():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(16, 4097))
        max_lag = int(rng.integers(0, min(n, 120)))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        got = cross_correlation(x, y, max_lag)
        want = direct_xcorr(x, y, max_lag)
        scale = np.max(np.abs(want)) or 1.0
        assert np.max(np.abs(got - want)) / scale < 1e-9


def test_cross_correlation_errors():
    with pytest.raises(LengthMismatch):
        cross_correlation([1, 2], [1, 2, 3], 1)
    with pytest.raises(EmptyInput):
        cross_correlation([], [], 0)
    with pytest.raises(ValueError):
        cross_correlation([1, 2, 3], [1, 2, 3], 3)


def test_normalized_self_similarity():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(512)
    score, lag = normalized_xcorr_max(x, x, 64)
    assert score == pytest.approx(1.0, abs=1e-12)
    assert lag == 0


def test_normalized_opposite_sign():
    rng = np.random.default_rng(9)
    x = rng.standard_normal(512)
    score, lag = normalized_xcorr_max(x, -x, 64)
    assert score == pytest.approx(-1.0, abs=1e-12)
    assert lag == 0


def test_normalized_constructed_delay():
    rng = np.random.default_rng(10)
    x = rng.standard_normal(4000)
    y = np.concatenate([np.zeros(7), x[:-7]])
    score, lag = normalized_xcorr_max(x, y, 50)
    assert lag == 7
    assert score >= 0.99


def test_zero_energy_raises():
    with pytest.raises(ZeroEnergySignal):
        normalized_xcorr_max(np.zeros(64), np.ones(64), 8)


def test_magnitude_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.standard_normal(300)
        y = rng.standard_normal(300)
        sx, _ = normalized_xcorr_max(x, y, 50)
        sy, _ = normalized_xcorr_max(y, x, 50)
        assert abs(abs(sx) - abs(sy)) < 1e-12


def test_scale_invariance():
    rng = np.random.default_rng(12)
    x = rng.standard_normal(500)
    y = rng.standard_normal(500)
    s1, l1 = normalized_xcorr_max(x, y, 40)
    s2, l2 = normalized_xcorr_max(3.7 * x, 0.002 * y, 40)
    assert s1 == pytest.approx(s2, abs=1e-9)
    assert l1 == l2


# --- band definitions --------------------------------------------------------

def test_third_octave_layout():
    bands = third_octave_bands(FS)
    assert len(bands) == 32
    rounded = [(round(b.low_hz), round(b.high_hz)) for b in bands]
    assert (355, 447) in rounded
    for a, b in zip(bands[:-1], bands[1:]):
        assert a.high_hz == pytest.approx(b.low_hz, rel=1e-12)
    ratio = 2.0 ** (1.0 / 3.0)
    for band in bands:
        assert abs(band.high_hz / band.low_hz - ratio) / ratio < 0.01


def test_third_octave_rate_too_low():
    with pytest.raises(SampleRateTooLow):
        third_octave_bands(32000)


def test_essential_bands_arithmetic():
    bands = essential_bands(EssentialBandConfig(300.0, 450.0, 5))
    edges = [b.low_hz for b in bands] + [bands[-1].high_hz]
    assert edges == pytest.approx([300, 330, 360, 390, 420, 450])


def test_essential_bands_single():
    bands = essential_bands(EssentialBandConfig(250.0, 500.0, 1))
    assert len(bands) == 1
    assert (bands[0].low_hz, bands[0].high_hz) == (250.0, 500.0)


def test_default_config_covers_payload_range():
    cfg = EssentialBandConfig()
    assert cfg.center_band_low_hz <= 348.33
    assert cfg.center_band_high_hz >= 411.66
    assert cfg.m_parts == 5


def test_band_config_validation():
    with pytest.raises(InvalidConfig):
        EssentialBandConfig(500.0, 300.0, 5)
    with pytest.raises(InvalidConfig):
        EssentialBandConfig(300.0, 500.0, 0)
    with pytest.raises(InvalidConfig):
        BandSpec(100.0, 50.0)


# --- band feature vectors ----------------------------------------------------

def test_identical_clips_score_one():
    clip, _ = generate_drone_noise(DroneSpec(370.0), 1.0, FS, seed=1)
    vec = band_feature_vector(clip, clip, essential_bands())
    assert np.all(vec.scores >= 1.0 - 1e-9)


def test_independent_noise_scores_small():
    rng = np.random.default_rng(13)
    scores = []
    for _ in range(25):
        a = AudioClip(rng.standard_normal(3 * FS) * 0.1, FS)
        b = AudioClip(rng.standard_normal(3 * FS) * 0.1, FS)
        scores.append(np.max(np.abs(band_feature_vector(a, b,
                                                        essential_bands()).scores)))
    assert np.quantile(scores, 0.99) < 0.2


def test_rate_and_duration_mismatch():
    a = AudioClip(np.ones(FS), FS)
    b = AudioClip(np.ones(FS), 22050)
    with pytest.raises(SampleRateMismatch):
        band_feature_vector(a, b, essential_bands())
    c = AudioClip(np.ones(2 * FS), FS)
    with pytest.raises(DurationMismatch):
        band_feature_vector(a, c, essential_bands())


def test_zero_energy_band_scores_zero():
    a = AudioClip(np.zeros(FS), FS)
    b = AudioClip(np.zeros(FS), FS)
    vec = band_feature_vector(a, b, essential_bands())
    assert np.all(vec.scores == 0.0)


def test_positive_pairs_beat_negative_pairs():
    from h2auth.synth import ScenarioSpec

    pos, neg = [], []
    for seed in range(8):
        out = stage_scenario(ScenarioSpec(
            drone=DroneSpec(370.0, imperfection_seed=2), seed=seed))
        vec = band_feature_vector(out.verifier_side_clip, out.drone_side_clip,
                                  essential_bands())
        pos.append(vec.scores.mean())
        other, _ = generate_drone_noise(DroneSpec(370.0, imperfection_seed=9),
                                        3.0, FS, seed=100 + seed)
        vec_n = band_feature_vector(out.verifier_side_clip, other,
                                    essential_bands())
        neg.append(vec_n.scores.mean())
    wins = sum(p > n for p, n in zip(pos, neg))
    assert wins >= int(0.95 * len(pos))


def test_jsonl_record_schema():
    vec = BandFeatureVector(np.array([0.5, -0.1]),
                            (BandSpec(300, 340), BandSpec(340, 380)))
    rec = to_jsonl_record(vec, 1, "pair-7")
    assert rec == {"kind": "similarity", "bands": [[300, 340], [340, 380]],
                   "scores": [0.5, -0.1], "label": 1, "pair_id": "pair-7"}


# --- essential frequency -----------------------------------------------------

def test_estimate_pure_sine():
    t = np.arange(3 * FS) / FS
    clip = AudioClip(0.5 * np.sin(2 * np.pi * 348.33 * t), FS)
    est = estimate_essential_frequency(clip)
    assert est.frequency_hz == pytest.approx(348.33, abs=0.5)
    assert not est.low_confidence


def test_estimate_commanded_f0():
    for seed in range(6):
        clip, track = generate_drone_noise(
            DroneSpec(348.33, imperfection_seed=seed), 3.0, FS, seed)
        est = estimate_essential_frequency(clip)
        assert abs(est.frequency_hz - track.mean()) <= 1.0


def test_estimate_payload_shift():
    clip, track = generate_drone_noise(
        DroneSpec(348.33, payload_shift_hz=411.66 - 348.33), 3.0, FS, seed=5)
    est = estimate_essential_frequency(clip)
    assert est.frequency_hz == pytest.approx(411.66, abs=1.0)


def test_estimate_white_noise_low_confidence():
    rng = np.random.default_rng(15)
    clip = AudioClip(rng.standard_normal(2 * FS) * 0.1, FS)
    est = estimate_essential_frequency(clip)
    assert est.low_confidence
    assert est.prominence_db < 6.0


def test_estimate_range_validation():
    clip = AudioClip(np.ones(FS), FS)
    with pytest.raises(InvalidConfig):
        estimate_essential_frequency(clip, 500.0, 300.0)
    with pytest.raises(InvalidConfig):
        estimate_essential_frequency(clip, 200.0, 30000.0)


# --- fisher scores -----------------------------------------------------------

def test_fisher_constant_feature_zero():
    X = np.column_stack([np.ones(20), np.arange(20.0)])
    y = np.array([0] * 10 + [1] * 10)
    scores = fisher_scores(X, y)
    assert scores[0] == 0.0


def test_fisher_label_feature_dominates():
    rng = np.random.default_rng(16)
    y = np.array([0] * 50 + [1] * 50)
    X = np.column_stack([y + rng.normal(0, 0.01, 100),
                         rng.standard_normal(100)])
    scores = fisher_scores(X, y)
    assert scores[0] == 1.0
    assert scores[1] < 0.1


def test_fisher_nonneg_and_affine_invariant():
    rng = np.random.default_rng(17)
    X = rng.standard_normal((60, 6))
    y = rng.integers(0, 2, 60)
    y[0], y[1] = 0, 1
    s1 = fisher_scores(X, y)
    assert np.all(s1 >= 0.0)
    scale = rng.uniform(0.5, 4.0, 6)
    shift = rng.uniform(-3.0, 3.0, 6)
    s2 = fisher_scores(X * scale + shift, y)
    assert np.max(np.abs(s1 - s2)) < 1e-9


def test_fisher_single_class():
    with pytest.raises(SingleClassData):
        fisher_scores(np.ones((5, 2)), np.zeros(5))


def test_fisher_top_band_overlaps_essential_range():
    plan = CorpusPlan(n_drones=2, pairs_per_drone=5, seed=55, duration_s=2.0,
                      essential_freq_low_hz=350.0, essential_freq_high_hz=400.0)
    bands = third_octave_bands(FS)
    X, y, _, _ = corpus_similarity_features(plan, bands=bands)
    scores = fisher_scores(X, y)
    top = bands[int(np.argmax(scores))]
    assert top.low_hz <= 400.0 and top.high_hz >= 350.0
