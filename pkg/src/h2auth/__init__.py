"""Drone/verifier mutual authentication from simultaneously recorded drone
noise, with sound-level and loudspeaker-liveness attack gates, plus the
synthetic acoustic world used to exercise the whole pipeline."""

from .audio import (
    AudioClip,
    CANONICAL_RATE_HZ,
    Origin,
    Spectrum,
    Window,
    load_wav,
    power_spectral_density,
    save_wav,
    spectrogram,
)
from .similarity import (
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
)
from .liveness import (
    LivenessFeatureVector,
    cumulative_power_profile,
    extract_liveness_features,
    levinson_durbin,
    lpcc,
    peak_pattern_features,
)
from .classify import (
    EvalReport,
    FeatureKind,
    KnnModel,
    LinearModel,
    cross_validate,
    evaluate,
    load_model,
    predict,
    predict_knn,
    save_model,
    train_knn,
    train_linear_svm,
)
from .attack_detect import (
    AttackVerdict,
    Calibration,
    GateConfig,
    LevelGate,
    LivenessGate,
    Overall,
    SoundLevelReading,
    attack_verdict,
    combine_levels,
    intensity_level_db,
    level_gate,
    measure_level,
)
from .protocol import (
    Decision,
    DecisionPipeline,
    Endpoint,
    Message,
    SessionConfig,
    SessionTranscript,
    Side,
    decide,
    endpoint_step,
    run_session,
)
from .synth import (
    AttackKind,
    AttackSpec,
    BenignSpeaker,
    CorpusPlan,
    DroneSpec,
    Environment,
    ScenarioSpec,
    ScenarioWorld,
    SpeakerCorpusPlan,
    SpeakerProfile,
    WorldOutput,
    generate_drone_noise,
    loudspeaker_replay,
    propagate,
    stage_scenario,
)
from .corpus import generate_corpus

__version__ = "0.1.0"
