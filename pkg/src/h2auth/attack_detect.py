"""Drone-side sound-level gate and orchestration of the liveness gates.

The level gate exploits that an attacker must out-shout a hovering drone's
own ~99 dB to distort its recording, while ordinary environments stay
below 95 dB. The liveness gate catches verifier-side replays that never
touch the drone microphone, and a content check keeps a benignly playing
loudspeaker (music, news) from triggering false rejections.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioClip
from .classify import FeatureKind, LinearModel, predict
from .errors import (
    EmptyInput,
    InvalidConfig,
    ModelKindMismatch,
    NonPositiveIntensity,
    SilentClip,
)
from .liveness import extract_liveness_features
from .similarity import BandSpec

REFERENCE_INTENSITY_W_PER_M2 = 1e-12

#: Default mapping from digital mean-square amplitude to intensity level.
#: Chosen so a hovering drone at 99.3 dB has ~15x digital headroom before
#: sample clipping, leaving room for staged 115 dB attacks.
DEFAULT_CALIBRATION_OFFSET_DB = 130.0

#: Loudest typical environmental sound (louder starts damaging hearing).
DEFAULT_I_EMAX_DB = 95.0
#: Quietest malicious sound that meaningfully distorts a drone's recording.
DEFAULT_I_AMIN_DB = 100.0

DEFAULT_HOVER_LEVEL_DB = 99.3

#: Band searched for loudspeaker peak patterns; matches the default
#: essential-frequency feature range.
DEFAULT_ESSENTIAL_BAND = BandSpec(300.0, 500.0, "essential")


def intensity_level_db(intensity_w_per_m2: float) -> float:
    """IL = 10*log10(I / 1e-12)."""
    if intensity_w_per_m2 <= 0.0:
        raise NonPositiveIntensity(f"intensity {intensity_w_per_m2} W/m^2")
    return 10.0 * np.log10(intensity_w_per_m2 / REFERENCE_INTENSITY_W_PER_M2)


def db_to_intensity(level_db: float) -> float:
    return REFERENCE_INTENSITY_W_PER_M2 * 10.0 ** (level_db / 10.0)


def combine_levels(levels_db) -> float:
    """Level of independent sources heard together: intensities add."""
    levels = np.asarray(levels_db, dtype=np.float64)
    if levels.size == 0:
        raise EmptyInput("no levels to combine")
    return float(intensity_level_db(np.sum(db_to_intensity(levels))))


@dataclass(frozen=True)
class Calibration:
    """Fixed offset from digital mean-square amplitude to intensity level."""

    offset_db: float = DEFAULT_CALIBRATION_OFFSET_DB

    def level_of_mean_square(self, mean_square: float) -> float:
        if mean_square <= 0.0:
            raise SilentClip("zero mean-square amplitude has no level")
        return 10.0 * np.log10(mean_square) + self.offset_db

    def mean_square_of_level(self, level_db: float) -> float:
        return 10.0 ** ((level_db - self.offset_db) / 10.0)


DEFAULT_CALIBRATION = Calibration()


@dataclass(frozen=True)
class SoundLevelReading:
    level_db: float
    calibration: Calibration = DEFAULT_CALIBRATION

    def __post_init__(self):
        if not np.isfinite(self.level_db):
            raise InvalidConfig("level must be finite")


def measure_level(clip: AudioClip, calibration: Calibration = DEFAULT_CALIBRATION
                  ) -> SoundLevelReading:
    """Calibrated intensity level of a digital clip."""
    if len(clip) == 0:
        raise EmptyInput("cannot measure an empty clip")
    mean_square = float(np.mean(clip.samples ** 2))
    return SoundLevelReading(calibration.level_of_mean_square(mean_square),
                             calibration)


@dataclass(frozen=True)
class GateConfig:
    """Attack-gate thresholds and switches.

    The drone-side threshold must sit strictly inside the admissible window
    (hover+environment-max, hover+attack-min); the default is its midpoint
    for the 99.3 dB reference drone.
    """

    drone_side_threshold_db: float = 101.6
    i_emax_db: float = DEFAULT_I_EMAX_DB
    i_amin_db: float = DEFAULT_I_AMIN_DB
    drone_hover_level_db: float = DEFAULT_HOVER_LEVEL_DB
    liveness_enabled: bool = True
    content_check_enabled: bool = True
    calibration: Calibration = DEFAULT_CALIBRATION

    def __post_init__(self):
        low, high = self.admissible_window()
        if not (low < self.drone_side_threshold_db < high):
            raise InvalidConfig(
                f"threshold {self.drone_side_threshold_db} dB outside "
                f"({low:.3f}, {high:.3f}) dB"
            )

    def admissible_window(self) -> tuple[float, float]:
        return (combine_levels([self.drone_hover_level_db, self.i_emax_db]),
                combine_levels([self.drone_hover_level_db, self.i_amin_db]))

    @classmethod
    def for_hover_level(cls, hover_level_db: float, **kwargs) -> "GateConfig":
        """Recompute the threshold (window midpoint) for a louder or
        quieter drone."""
        low = combine_levels([hover_level_db, kwargs.get("i_emax_db",
                                                         DEFAULT_I_EMAX_DB)])
        high = combine_levels([hover_level_db, kwargs.get("i_amin_db",
                                                          DEFAULT_I_AMIN_DB)])
        return cls(drone_side_threshold_db=(low + high) / 2.0,
                   drone_hover_level_db=hover_level_db, **kwargs)

    def to_dict(self) -> dict:
        return {
            "drone_side_threshold_db": self.drone_side_threshold_db,
            "i_emax_db": self.i_emax_db,
            "i_amin_db": self.i_amin_db,
            "drone_hover_level_db": self.drone_hover_level_db,
            "liveness_enabled": self.liveness_enabled,
            "content_check_enabled": self.content_check_enabled,
            "calibration_offset_db": self.calibration.offset_db,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GateConfig":
        data = dict(data)
        offset = data.pop("calibration_offset_db", DEFAULT_CALIBRATION_OFFSET_DB)
        return cls(calibration=Calibration(offset), **data)


class LevelGate(enum.Enum):
    PASS = "pass"
    FAIL = "fail"


class LivenessGate(enum.Enum):
    PASS = "pass"
    LOUDSPEAKER_BENIGN = "loudspeaker_benign"
    LOUDSPEAKER_DRONE_SOUND = "loudspeaker_drone_sound"
    DISABLED = "disabled"


class Overall(enum.Enum):
    CLEAN = "clean"
    ATTACK_SUSPECTED = "attack_suspected"


@dataclass(frozen=True)
class AttackVerdict:
    level_gate: LevelGate
    liveness_gate: LivenessGate
    overall: Overall
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        suspected = (self.level_gate is LevelGate.FAIL
                     or self.liveness_gate is LivenessGate.LOUDSPEAKER_DRONE_SOUND)
        expected = Overall.ATTACK_SUSPECTED if suspected else Overall.CLEAN
        if self.overall is not expected:
            raise ValueError("overall verdict inconsistent with gate outcomes")


def level_gate(reading: SoundLevelReading, cfg: GateConfig) -> LevelGate:
    """Fail when the drone-side level exceeds the threshold."""
    if reading.level_db > cfg.drone_side_threshold_db:
        return LevelGate.FAIL
    return LevelGate.PASS


def _check_kind(model: LinearModel, kind: FeatureKind) -> None:
    if model.feature_kind is not kind:
        raise ModelKindMismatch(
            f"model is for {model.feature_kind.value}, need {kind.value}"
        )


def attack_verdict(verifier_clip: AudioClip, drone_reading: SoundLevelReading,
                   cfg: GateConfig,
                   liveness_model: LinearModel | None = None,
                   content_model: LinearModel | None = None,
                   essential_band: BandSpec = DEFAULT_ESSENTIAL_BAND,
                   ) -> AttackVerdict:
    """Run the drone-side level gate and the verifier-side liveness gates.

    A detected loudspeaker is not an attack by itself: only when the
    content classifier says it is playing drone noise does the verdict
    flip to attack-suspected.
    """
    lvl = level_gate(drone_reading, cfg)
    details: dict = {
        "drone_level_db": drone_reading.level_db,
        "threshold_db": cfg.drone_side_threshold_db,
    }

    if not cfg.liveness_enabled or liveness_model is None:
        liveness = LivenessGate.DISABLED
    else:
        _check_kind(liveness_model, FeatureKind.LOUDSPEAKER_PRESENCE)
        features = extract_liveness_features(verifier_clip, essential_band)
        vector = features.as_array()
        speaker_score, speaker_present = predict(liveness_model, vector)
        details["liveness_score"] = speaker_score
        if not speaker_present:
            liveness = LivenessGate.PASS
        elif cfg.content_check_enabled and content_model is not None:
            _check_kind(content_model, FeatureKind.LOUDSPEAKER_CONTENT)
            content_score, is_drone_sound = predict(content_model, vector)
            details["content_score"] = content_score
            liveness = (LivenessGate.LOUDSPEAKER_DRONE_SOUND if is_drone_sound
                        else LivenessGate.LOUDSPEAKER_BENIGN)
        else:
            # without a content check any loudspeaker is treated as hostile
            liveness = LivenessGate.LOUDSPEAKER_DRONE_SOUND

    suspected = (lvl is LevelGate.FAIL
                 or liveness is LivenessGate.LOUDSPEAKER_DRONE_SOUND)
    overall = Overall.ATTACK_SUSPECTED if suspected else Overall.CLEAN
    return AttackVerdict(lvl, liveness, overall, details)
