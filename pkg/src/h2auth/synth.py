"""Synthetic acoustic world: parametric drone noise, propagation, environment
presets, a loudspeaker distortion model, and staging of every attack in the
threat model. All generation is a pure function of (spec, seed).

Level conventions (documented here because a digital world has to pick them):
the drone-side microphone is treated as sitting at the 1 m reference
distance, so it reads the drone's source level (99.3 dB for the reference
drone); the verifier hears the drone attenuated by 20*log10(distance) and
delayed by distance/343 s rounded to whole samples. Attack and environment
levels are the levels measured at the affected microphone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sp_signal

from .audio import AudioClip, Origin
from .attack_detect import (
    Calibration,
    DEFAULT_CALIBRATION,
    DEFAULT_HOVER_LEVEL_DB,
    SoundLevelReading,
    measure_level,
)
from .errors import InvalidScenario, SilentClip, WorldExhausted

SPEED_OF_SOUND_M_PER_S = 343.0

#: Mean-reversion time of the hover f0 wander (the drone constantly trims
#: its actuators; deviations decay on this timescale).
F0_WANDER_TAU_S = 0.4

#: Control rate for f0/amplitude modulation tracks, interpolated up to the
#: audio rate.
CONTROL_RATE_HZ = 100

#: rms of freshly generated source waveforms before staging scales them.
NOMINAL_SOURCE_RMS = 0.05


def _rng_from(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def _child_seeds(seed: int, n: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint64)


def _ou_track(rng: np.random.Generator, n_ctrl: int, tau_s: float,
              dt_s: float) -> np.ndarray:
    """Unit-variance Ornstein-Uhlenbeck samples at the control rate."""
    alpha = np.exp(-dt_s / tau_s)
    step = np.sqrt(1.0 - alpha * alpha)
    x = np.empty(n_ctrl)
    x[0] = rng.standard_normal()
    noise = rng.standard_normal(n_ctrl - 1)
    for i in range(1, n_ctrl):
        x[i] = alpha * x[i - 1] + step * noise[i - 1]
    return x


def _upsample(track_ctrl: np.ndarray, n_out: int) -> np.ndarray:
    t_ctrl = np.linspace(0.0, 1.0, len(track_ctrl))
    t_out = np.linspace(0.0, 1.0, n_out)
    return np.interp(t_out, t_ctrl, track_ctrl)


def _normalize_rms(x: np.ndarray, target_rms: float = NOMINAL_SOURCE_RMS
                   ) -> np.ndarray:
    rms = np.sqrt(np.mean(x ** 2))
    if rms == 0.0:
        raise SilentClip("cannot normalize a silent waveform")
    return x * (target_rms / rms)


def scale_to_level(x: np.ndarray, level_db: float,
                   calibration: Calibration = DEFAULT_CALIBRATION) -> np.ndarray:
    """Rescale so the calibrated level of the result is level_db."""
    mean_square = float(np.mean(x ** 2))
    if mean_square == 0.0:
        raise SilentClip("cannot set the level of a silent waveform")
    target = calibration.mean_square_of_level(level_db)
    return x * np.sqrt(target / mean_square)


def _lowpass_noise(rng, n, fs, cutoff_hz, order=2):
    sos = sp_signal.butter(order, cutoff_hz, btype="lowpass", fs=fs,
                           output="sos")
    return sp_signal.sosfilt(sos, rng.standard_normal(n))


def _bandpass_noise(rng, n, fs, low_hz, high_hz, order=2):
    sos = sp_signal.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs,
                           output="sos")
    return sp_signal.sosfilt(sos, rng.standard_normal(n))


@dataclass(frozen=True)
class HoverJitter:
    """Stochastic texture of hovering: f0 wander and amplitude modulation."""

    f0_drift_hz_per_s: float = 2.0
    am_depth: float = 0.30

    @property
    def f0_wander_std_hz(self) -> float:
        return self.f0_drift_hz_per_s * F0_WANDER_TAU_S


#: Relative harmonic amplitudes putting ~3/4 of the power in the
#: fundamental, matching how strongly a hovering drone concentrates power
#: around its essential frequency.
DEFAULT_HARMONIC_AMPS = (1.0, 0.42, 0.30, 0.20, 0.14, 0.10, 0.07, 0.05, 0.04, 0.03)


@dataclass(frozen=True)
class DroneSpec:
    """Parameters of one virtual drone.

    imperfection_seed is the drone's permanent manufacturing signature; two
    specs differing only in this seed sound like two physical units of the
    same model.
    """

    essential_freq_hz: float
    payload_shift_hz: float = 0.0
    harmonic_amps: tuple[float, ...] = DEFAULT_HARMONIC_AMPS
    imperfection_seed: int = 0
    hover_jitter: HoverJitter = field(default_factory=HoverJitter)
    broadband_noise_level: float = 0.05
    hover_level_db: float = DEFAULT_HOVER_LEVEL_DB

    def __post_init__(self):
        if not (200.0 <= self.essential_freq_hz <= 800.0):
            raise InvalidScenario(
                f"essential frequency {self.essential_freq_hz} Hz outside "
                "[200, 800]"
            )
        if len(self.harmonic_amps) == 0 or any(a < 0 for a in self.harmonic_amps):
            raise InvalidScenario("harmonic amplitudes must be >= 0")

    def to_dict(self) -> dict:
        return {
            "essential_freq_hz": self.essential_freq_hz,
            "payload_shift_hz": self.payload_shift_hz,
            "harmonic_amps": list(self.harmonic_amps),
            "imperfection_seed": self.imperfection_seed,
            "f0_drift_hz_per_s": self.hover_jitter.f0_drift_hz_per_s,
            "am_depth": self.hover_jitter.am_depth,
            "broadband_noise_level": self.broadband_noise_level,
            "hover_level_db": self.hover_level_db,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DroneSpec":
        data = dict(data)
        jitter = HoverJitter(data.pop("f0_drift_hz_per_s", 4.0),
                             data.pop("am_depth", 0.25))
        data["harmonic_amps"] = tuple(data.get("harmonic_amps",
                                               DEFAULT_HARMONIC_AMPS))
        return cls(hover_jitter=jitter, **data)


def harmonic_stack(f0_track: np.ndarray, harmonic_amps, sample_rate_hz: int,
                   phases=None, harmonic_detune=None,
                   envelope: np.ndarray | None = None) -> np.ndarray:
    """Sum of harmonics following a commanded per-sample f0 track."""
    amps = np.asarray(harmonic_amps, dtype=np.float64)
    base_phase = 2.0 * np.pi * np.cumsum(f0_track) / sample_rate_hz
    if phases is None:
        phases = np.zeros(len(amps))
    if harmonic_detune is None:
        harmonic_detune = np.zeros(len(amps))
    out = np.zeros(len(f0_track))
    for k, amp in enumerate(amps, start=1):
        if amp == 0.0:
            continue
        out += amp * np.sin(k * (1.0 + harmonic_detune[k - 1]) * base_phase
                            + phases[k - 1])
    if envelope is not None:
        out *= envelope
    return out


def generate_drone_noise(spec: DroneSpec, duration_s: float,
                         sample_rate: int, seed: int
                         ) -> tuple[AudioClip, np.ndarray]:
    """One hover recording plus the commanded f0 track (ground truth).

    The f0 wanders as a mean-reverting walk centered exactly on
    essential_freq_hz + payload_shift_hz; the walk, amplitude modulation
    and broadband turbulence draw from a stream keyed by both the
    generation seed and the drone's imperfection seed, so two same-model
    drones never share a trajectory.
    """
    n = int(round(duration_s * sample_rate))
    rng = _rng_from(seed, spec.imperfection_seed, 101)
    signature = _rng_from(spec.imperfection_seed, 202)

    # permanent per-drone signature: harmonic amplitude jitter (fundamental
    # exempt, it must stay the dominant line), harmonic detuning, and the
    # per-rotor speed offsets of the four motors (kept pairwise symmetric so
    # the spectral peak stays on the commanded f0)
    jitter = np.exp(signature.normal(0.0, 0.10, len(spec.harmonic_amps)))
    jitter[0] = 1.0
    amps = np.asarray(spec.harmonic_amps) * jitter
    detune = np.concatenate([[0.0],
                             signature.normal(0.0, 0.0015,
                                              len(spec.harmonic_amps) - 1)])
    # disjoint spread ranges keep every pair of rotor lines >= 0.4 Hz apart,
    # so no two lines can beat coherently across a whole clip and skew the
    # realized spectrum to one side
    half_spread = np.array([signature.uniform(0.5, 0.9),
                            signature.uniform(1.3, 1.9)])
    rotor_offsets_hz = np.array([half_spread[0], -half_spread[0],
                                 half_spread[1], -half_spread[1]])
    rotor_amps = 1.0 + signature.normal(0.0, 0.05, 4)

    dt = 1.0 / CONTROL_RATE_HZ
    n_ctrl = max(2, int(round(duration_s * CONTROL_RATE_HZ)) + 1)
    wander = _ou_track(rng, n_ctrl, F0_WANDER_TAU_S, dt)
    wander = wander - wander.mean()  # commanded mean is exact
    f_base = spec.essential_freq_hz + spec.payload_shift_hz
    f0_track = f_base + _upsample(wander * spec.hover_jitter.f0_wander_std_hz, n)

    am = _upsample(_ou_track(rng, n_ctrl, 0.5, dt), n)
    envelope = 1.0 + spec.hover_jitter.am_depth * np.tanh(am)

    phases = rng.uniform(0.0, 2.0 * np.pi, len(amps))
    tonal = harmonic_stack(f0_track, amps, sample_rate, phases, detune, envelope)

    # replace the single fundamental with the four-rotor tone cluster; each
    # motor is trimmed independently, so each rotor line wanders on its own
    base_phase = 2.0 * np.pi * np.cumsum(f0_track) / sample_rate
    t = np.arange(n) / sample_rate
    cluster = np.zeros(n)
    rotor_phases = rng.uniform(0.0, 2.0 * np.pi, 4)
    for offset, r_amp, phi in zip(rotor_offsets_hz, rotor_amps, rotor_phases):
        trim = _upsample(_ou_track(rng, n_ctrl, 0.15, dt), n) * 0.4
        rotor_phase = 2.0 * np.pi * np.cumsum(offset + trim) / sample_rate
        cluster += r_amp * np.sin(base_phase + rotor_phase + phi)
    # beats make the realized cluster power seed-dependent; pin it to the
    # fundamental's nominal power so the essential line always dominates
    cluster *= amps[0] / np.sqrt(2.0 * np.mean(cluster ** 2))
    tonal -= amps[0] * np.sin(base_phase + phases[0]) * envelope
    tonal += cluster * envelope

    # broadband turbulence shaped toward low frequencies
    sos = sp_signal.butter(2, 2000.0, btype="lowpass", fs=sample_rate,
                           output="sos")
    noise = sp_signal.sosfilt(sos, rng.standard_normal(n))
    tonal_power = np.mean(tonal ** 2)
    noise_power = np.mean(noise ** 2)
    if noise_power > 0.0:
        noise *= np.sqrt(spec.broadband_noise_level * tonal_power / noise_power)

    samples = _normalize_rms(tonal + noise)
    return AudioClip(samples, sample_rate, Origin.SYNTHETIC), f0_track


def propagate(clip: AudioClip, distance_m: float, source_level_db: float,
              calibration: Calibration = DEFAULT_CALIBRATION) -> AudioClip:
    """Inverse-square attenuation plus an integer-sample flight delay.

    The clip is pinned to source_level_db at the 1 m reference distance,
    so propagating to 1 m is the identity scaling and each doubling of
    distance costs 20*log10(2) dB.
    """
    if distance_m <= 0.0:
        raise InvalidScenario("distance must be > 0")
    scaled = scale_to_level(clip.samples, source_level_db, calibration)
    scaled /= distance_m
    delay = int(round(distance_m / SPEED_OF_SOUND_M_PER_S * clip.sample_rate_hz))
    out = np.zeros_like(scaled)
    if delay < len(scaled):
        out[delay:] = scaled[:len(scaled) - delay]
    return AudioClip(out, clip.sample_rate_hz, clip.origin)


# --- loudspeaker model -----------------------------------------------------

@dataclass(frozen=True)
class SpeakerProfile:
    """One loudspeaker's passband, drive curve, bass weakness, and hiss.

    Distortion is referenced to max_clean_level_db, the loudest output the
    driver produces without audible strain. bass_cut_db models how poorly a
    small driver reproduces energy below shelf_hz (drone fundamentals sit
    below the resonance of most portable speakers). Hiss is high-frequency
    (driver and capture chain noise rises with frequency), so it spreads
    power upward without polluting the low band.
    """

    name: str
    lowcut_hz: float = 80.0
    highcut_hz: float = 16000.0
    drive_scale: float = 1.2
    asymmetry: float = 0.25
    hiss_db_rel: float = -5.5
    bass_cut_db: float = -9.0
    shelf_hz: float = 700.0
    max_clean_level_db: float = 78.0
    hiss_low_hz: float = 2000.0


DEFAULT_SPEAKER = SpeakerProfile("reference")

BUILTIN_SPEAKER_PROFILES = {
    "reference": DEFAULT_SPEAKER,
    "compact": SpeakerProfile("compact", 150.0, 12000.0, 1.5, 0.30, -4.5,
                              -12.0, 800.0, 74.0),
    "bookshelf": SpeakerProfile("bookshelf", 90.0, 15000.0, 1.0, 0.18, -6.0,
                                -10.5, 650.0, 80.0),
    "horn": SpeakerProfile("horn", 120.0, 16000.0, 2.0, 0.35, -4.0,
                           -10.0, 750.0, 76.0),
    # powerful directional PA gear: what an attacker needs to reach 95+ dB
    "pa": SpeakerProfile("pa", 60.0, 16000.0, 1.0, 0.12, -14.0,
                         -4.0, 500.0, 108.0),
}


def loudspeaker_replay(clip: AudioClip, playback_level_db: float,
                       profile: SpeakerProfile = DEFAULT_SPEAKER,
                       seed: int = 0,
                       calibration: Calibration = DEFAULT_CALIBRATION
                       ) -> AudioClip:
    """What a microphone hears when a loudspeaker plays this clip.

    Memoryless soft clipping whose drive grows exponentially with playback
    level above the driver's clean capability (distortion rises with
    amplitude), band-limiting to the passband with a low-frequency shelf
    cut, and seeded high-frequency hiss. Output is scaled so it measures
    playback_level_db at the microphone.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    rms = np.sqrt(np.mean(x ** 2))
    if rms == 0.0:
        raise SilentClip("nothing to replay")
    drive = profile.drive_scale * 10.0 ** (
        (playback_level_db - profile.max_clean_level_db) / 20.0)
    shaped = np.tanh(drive * (x / rms))
    shaped = shaped + profile.asymmetry * shaped ** 2
    shaped -= shaped.mean()

    fs = clip.sample_rate_hz
    sos = sp_signal.butter(4, [profile.lowcut_hz, profile.highcut_hz],
                           btype="bandpass", fs=fs, output="sos")
    shaped = sp_signal.sosfilt(sos, shaped)
    shelf = sp_signal.butter(2, profile.shelf_hz, btype="lowpass", fs=fs,
                             output="sos")
    gain = 10.0 ** (profile.bass_cut_db / 20.0)
    shaped = shaped + (gain - 1.0) * sp_signal.sosfilt(shelf, shaped)

    rng = _rng_from(seed, 303)
    hiss = _bandpass_noise(rng, len(shaped), fs, profile.hiss_low_hz,
                           profile.highcut_hz)
    signal_power = np.mean(shaped ** 2)
    hiss *= np.sqrt(signal_power * 10.0 ** (profile.hiss_db_rel / 10.0)
                    / np.mean(hiss ** 2))
    out = scale_to_level(shaped + hiss, playback_level_db, calibration)
    return AudioClip(out, clip.sample_rate_hz, Origin.SYNTHETIC)


# --- environment and playback content ---------------------------------------

class Environment(enum.Enum):
    QUIET = "quiet"
    HIGHWAY = "highway"
    PARTY = "party"
    PLAZA = "plaza"
    LAWNMOWER = "lawnmower"


#: Preset levels measured in the field study environments.
ENVIRONMENT_LEVEL_DB = {
    Environment.QUIET: 40.0,
    Environment.HIGHWAY: 70.0,
    Environment.PARTY: 71.0,
    Environment.PLAZA: 65.0,
    Environment.LAWNMOWER: 73.0,
}


def music_content(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    """Looping chord progression with percussive noise bursts."""
    roots = rng.uniform(130.0, 260.0, 4)
    beat = int(0.6 * fs)
    out = np.zeros(n + beat)
    t = np.arange(beat) / fs
    env = np.exp(-t / 0.45) * np.minimum(1.0, t / 0.02)
    pos = 0
    chord = 0
    while pos < n:
        root = roots[chord % len(roots)]
        for ratio in (1.0, 1.25, 1.5, 2.0):
            for k in range(1, 5):
                f = root * ratio * k
                if f >= fs / 2:
                    break
                out[pos:pos + beat] += (env / k ** 1.5
                                        * np.sin(2 * np.pi * f * t
                                                 + rng.uniform(0, 2 * np.pi)))
        # percussive tick on the beat
        burst = rng.standard_normal(int(0.01 * fs)) * 0.8
        out[pos:pos + len(burst)] += burst * np.exp(-np.arange(len(burst))
                                                    / (0.002 * fs))
        pos += beat
        chord += 1
    return _normalize_rms(out[:n], 1.0)


def news_content(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    """Speech-like babble: pitched pulses through formant filters with a
    syllabic on/off envelope and fricative bursts."""
    f0 = rng.uniform(100.0, 180.0)
    track = f0 * (1.0 + 0.15 * _upsample(_ou_track(rng, max(2, n // 441), 0.2,
                                                   0.01), n))
    voiced = harmonic_stack(track, [1.0 / k for k in range(1, 16)], fs)
    formants = np.zeros(n)
    for low, high in ((rng.uniform(300, 600), rng.uniform(700, 1100)),
                      (rng.uniform(1200, 1800), rng.uniform(2000, 2800))):
        sos = sp_signal.butter(2, [low, high], btype="bandpass", fs=fs,
                               output="sos")
        formants += sp_signal.sosfilt(sos, voiced)

    # syllable gating ~4 Hz with pauses
    envelope = np.zeros(n)
    pos = 0
    while pos < n:
        talk = int(rng.uniform(0.12, 0.3) * fs)
        gap = int(rng.uniform(0.05, 0.2) * fs)
        envelope[pos:pos + talk] = rng.uniform(0.5, 1.0)
        pos += talk + gap
    out = formants * envelope
    fric = _bandpass_noise(rng, n, fs, 2500.0, 8000.0)
    out += fric * (envelope < 0.01) * 0.15
    return _normalize_rms(out, 1.0)


def environment_noise(kind: Environment, rng: np.random.Generator, n: int,
                      fs: int) -> np.ndarray:
    """Unit-rms background texture for one preset."""
    if kind is Environment.QUIET:
        return _normalize_rms(_lowpass_noise(rng, n, fs, 800.0, order=1), 1.0)
    if kind is Environment.HIGHWAY:
        rumble = _lowpass_noise(rng, n, fs, 300.0)
        am = 1.0 + 0.5 * np.tanh(_upsample(_ou_track(rng, max(2, n // 4410),
                                                     1.5, 0.1), n))
        return _normalize_rms(rumble * am, 1.0)
    if kind is Environment.PARTY:
        babble = np.zeros(n)
        for _ in range(6):
            stream = _bandpass_noise(rng, n, fs, 250.0, 3500.0)
            gate = np.clip(_upsample(_ou_track(rng, max(2, n // 4410), 0.25,
                                               0.1), n), 0.0, None)
            babble += stream * gate
        tunes = music_content(rng, n, fs)
        return _normalize_rms(_normalize_rms(babble, 1.0) + 0.5 * tunes, 1.0)
    if kind is Environment.PLAZA:
        wash = _bandpass_noise(rng, n, fs, 150.0, 4000.0)
        am = 1.0 + 0.3 * np.tanh(_upsample(_ou_track(rng, max(2, n // 4410),
                                                     1.0, 0.1), n))
        return _normalize_rms(wash * am, 1.0)
    if kind is Environment.LAWNMOWER:
        track = 92.0 * (1.0 + 0.02 * _upsample(_ou_track(rng,
                                                         max(2, n // 441),
                                                         0.3, 0.01), n))
        engine = harmonic_stack(track, [1.0, 0.8, 0.7, 0.5, 0.4, 0.3, 0.25,
                                        0.2], fs,
                                phases=rng.uniform(0, 2 * np.pi, 8))
        hash_ = _bandpass_noise(rng, n, fs, 500.0, 4000.0)
        return _normalize_rms(_normalize_rms(engine, 1.0) + 0.5
                              * _normalize_rms(hash_, 1.0), 1.0)
    raise InvalidScenario(f"unknown environment {kind}")


def gust_noise(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    """Low-frequency wind bursts rushing over a bare microphone."""
    wind = _lowpass_noise(rng, n, fs, 80.0, order=2)
    envelope = np.zeros(n)
    pos = 0
    while pos < n:
        burst = int(rng.uniform(0.3, 0.8) * fs)
        lull = int(rng.uniform(0.5, 2.0) * fs)
        envelope[pos:pos + burst] = rng.uniform(0.5, 1.0)
        pos += burst + lull
    return _normalize_rms(wind * np.maximum(envelope, 0.05), 1.0)


# --- scenario staging --------------------------------------------------------

class AttackKind(enum.Enum):
    NONE = "none"
    DOMINANT_SOUND = "dominant_sound"
    VERIFIER_RELAY = "verifier_relay"
    DRONE_RELAY = "drone_relay"
    IDENTICAL_MODEL = "identical_model"


@dataclass(frozen=True)
class AttackSpec:
    """speaker_profile None picks a default per kind: high-level attacks
    (dominant sound, drone-side relay) need PA gear; the sneaky
    verifier-side relay uses a portable unit."""

    kind: AttackKind = AttackKind.NONE
    level_db: float = 0.0
    content: str = "drone_noise"     # dominant-sound payload
    speaker_profile: str | None = None
    attacker_drone: DroneSpec | None = None

    def resolved_profile(self) -> str:
        if self.speaker_profile is not None:
            return self.speaker_profile
        return ("reference" if self.kind is AttackKind.VERIFIER_RELAY
                else "pa")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "level_db": self.level_db,
            "content": self.content,
            "speaker_profile": self.speaker_profile,
            "attacker_drone": (self.attacker_drone.to_dict()
                               if self.attacker_drone else None),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttackSpec":
        data = dict(data)
        drone = data.pop("attacker_drone", None)
        return cls(kind=AttackKind(data.pop("kind", "none")),
                   attacker_drone=DroneSpec.from_dict(drone) if drone else None,
                   **data)


@dataclass(frozen=True)
class BenignSpeaker:
    """A loudspeaker near the verifier playing ordinary content."""

    content: str = "music"           # music | news
    level_db: float = 70.0
    speaker_profile: str = "reference"

    def to_dict(self) -> dict:
        return {"content": self.content, "level_db": self.level_db,
                "speaker_profile": self.speaker_profile}


@dataclass(frozen=True)
class ScenarioSpec:
    drone: DroneSpec
    verifier_distance_m: float = 5.0
    environment: Environment = Environment.QUIET
    env_level_db: float | None = None
    attack: AttackSpec = field(default_factory=AttackSpec)
    benign_speaker: BenignSpeaker | None = None
    gusts_level_db: float | None = None
    duration_s: float = 3.0
    seed: int = 0
    sample_rate_hz: int = 44100
    calibration: Calibration = DEFAULT_CALIBRATION

    def __post_init__(self):
        if self.verifier_distance_m <= 0.0:
            raise InvalidScenario("distance must be > 0")
        if self.duration_s <= 0.0:
            raise InvalidScenario("duration must be > 0")
        levels = [self.attack.level_db, self.env_level_db or 0.0]
        if not np.all(np.isfinite(levels)):
            raise InvalidScenario("levels must be finite")

    def to_dict(self) -> dict:
        return {
            "drone": self.drone.to_dict(),
            "verifier_distance_m": self.verifier_distance_m,
            "environment": self.environment.value,
            "env_level_db": self.env_level_db,
            "attack": self.attack.to_dict(),
            "benign_speaker": (self.benign_speaker.to_dict()
                               if self.benign_speaker else None),
            "gusts_level_db": self.gusts_level_db,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "sample_rate_hz": self.sample_rate_hz,
            "calibration_offset_db": self.calibration.offset_db,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        benign = data.pop("benign_speaker", None)
        return cls(
            drone=DroneSpec.from_dict(data.pop("drone")),
            environment=Environment(data.pop("environment", "quiet")),
            attack=AttackSpec.from_dict(data.pop("attack", {"kind": "none"})),
            benign_speaker=BenignSpeaker(**benign) if benign else None,
            calibration=Calibration(data.pop("calibration_offset_db",
                                             DEFAULT_CALIBRATION.offset_db)),
            **data,
        )


@dataclass(frozen=True)
class GroundTruth:
    is_attack: bool
    attack_kind: AttackKind
    commanded_f0_track: np.ndarray
    speaker_present: bool
    speaker_content: str | None
    speaker_profile: str | None

    def to_dict(self) -> dict:
        return {
            "is_attack": self.is_attack,
            "attack_kind": self.attack_kind.value,
            "speaker_present": self.speaker_present,
            "speaker_content": self.speaker_content,
            "speaker_profile": self.speaker_profile,
        }


@dataclass(frozen=True)
class WorldOutput:
    drone_side_clip: AudioClip
    verifier_side_clip: AudioClip
    drone_side_level: SoundLevelReading
    ground_truth: GroundTruth


def _content_wave(name: str, rng: np.random.Generator, n: int, fs: int,
                  fallback_drone: DroneSpec, seed: int) -> np.ndarray:
    if name == "music":
        return music_content(rng, n, fs)
    if name == "news":
        return news_content(rng, n, fs)
    if name == "drone_noise":
        clip, _ = generate_drone_noise(fallback_drone, n / fs, fs, seed)
        return np.asarray(clip.samples)
    raise InvalidScenario(f"unknown content {name!r}")


def _speaker_out(wave: np.ndarray, level_db: float, profile_name: str,
                 fs: int, seed: int, calibration: Calibration) -> np.ndarray:
    profile = BUILTIN_SPEAKER_PROFILES.get(profile_name)
    if profile is None:
        raise InvalidScenario(f"unknown speaker profile {profile_name!r}")
    clip = AudioClip(_normalize_rms(wave), fs, Origin.SYNTHETIC)
    return np.asarray(loudspeaker_replay(clip, level_db, profile, seed,
                                         calibration).samples)


def _default_attacker(drone: DroneSpec, seed: int) -> DroneSpec:
    """Same-model unit with a different manufacturing signature."""
    return replace(drone, imperfection_seed=int(seed))


def stage_scenario(spec: ScenarioSpec) -> WorldOutput:
    """Compose generation, propagation, environment, and attack injection
    into the two microphone recordings of one authentication attempt."""
    fs = spec.sample_rate_hz
    n = int(round(spec.duration_s * fs))
    cal = spec.calibration
    seeds = _child_seeds(spec.seed, 10)
    delay = int(round(spec.verifier_distance_m / SPEED_OF_SOUND_M_PER_S * fs))

    padded, f0_track = generate_drone_noise(
        spec.drone, (n + delay) / fs, fs, int(seeds[0]))
    own = np.asarray(padded.samples)
    hover_db = spec.drone.hover_level_db
    verifier_drone_db = hover_db - 20.0 * np.log10(spec.verifier_distance_m)

    env_db = (ENVIRONMENT_LEVEL_DB[spec.environment]
              if spec.env_level_db is None else spec.env_level_db)
    env_d = scale_to_level(environment_noise(spec.environment,
                                             _rng_from(seeds[1], 1), n, fs),
                           env_db, cal)
    env_v = scale_to_level(environment_noise(spec.environment,
                                             _rng_from(seeds[2], 2), n, fs),
                           env_db, cal)

    d_own = scale_to_level(own[delay:delay + n], hover_db, cal)
    attack = spec.attack
    kind = attack.kind

    speaker_present = False
    speaker_content: str | None = None
    speaker_profile: str | None = None

    if kind is AttackKind.NONE:
        c_drone = scale_to_level(own[:n], verifier_drone_db, cal)
        d_mix = d_own + env_d
        c_mix = c_drone + env_v
    elif kind is AttackKind.DOMINANT_SOUND:
        content = _content_wave(attack.content, _rng_from(seeds[3], 3), n, fs,
                                _default_attacker(spec.drone, seeds[4]),
                                int(seeds[4]))
        blast = _speaker_out(content, attack.level_db,
                             attack.resolved_profile(), fs, int(seeds[5]),
                             cal)
        c_drone = scale_to_level(own[:n], verifier_drone_db, cal)
        d_mix = d_own + env_d + blast
        c_mix = c_drone + env_v + blast  # synchronized, equal level both sides
        speaker_present = True
        speaker_content = attack.content
        speaker_profile = attack.resolved_profile()
    elif kind is AttackKind.VERIFIER_RELAY:
        # the victim drone hovers away from the verifier; what the verifier
        # hears is its relayed recording out of a loudspeaker
        relay_source = d_own + env_d
        replay = _speaker_out(relay_source, attack.level_db,
                              attack.resolved_profile(), fs, int(seeds[5]),
                              cal)
        d_mix = d_own + env_d
        c_mix = replay + env_v
        speaker_present = True
        speaker_content = "drone_noise"
        speaker_profile = attack.resolved_profile()
    elif kind is AttackKind.DRONE_RELAY:
        attacker = attack.attacker_drone or _default_attacker(spec.drone,
                                                              seeds[6])
        imposter, _ = generate_drone_noise(attacker, (n + delay) / fs, fs,
                                           int(seeds[7]))
        imp = np.asarray(imposter.samples)
        c_drone = scale_to_level(
            imp[:n], attacker.hover_level_db
            - 20.0 * np.log10(spec.verifier_distance_m), cal)
        c_mix = c_drone + env_v
        # what was recorded near the verifier is blasted at the real drone
        replay = _speaker_out(c_mix, attack.level_db,
                              attack.resolved_profile(), fs, int(seeds[5]),
                              cal)
        d_mix = d_own + env_d + replay
    elif kind is AttackKind.IDENTICAL_MODEL:
        attacker = attack.attacker_drone or _default_attacker(spec.drone,
                                                              seeds[6])
        imposter, _ = generate_drone_noise(attacker, (n + delay) / fs, fs,
                                           int(seeds[7]))
        imp = np.asarray(imposter.samples)
        c_drone = scale_to_level(
            imp[:n], attacker.hover_level_db
            - 20.0 * np.log10(spec.verifier_distance_m), cal)
        d_mix = d_own + env_d
        c_mix = c_drone + env_v
    else:  # pragma: no cover
        raise InvalidScenario(f"unhandled attack kind {kind}")

    if spec.benign_speaker is not None:
        b = spec.benign_speaker
        content = _content_wave(b.content, _rng_from(seeds[8], 8), n, fs,
                                _default_attacker(spec.drone, seeds[4]),
                                int(seeds[4]))
        c_mix = c_mix + _speaker_out(content, b.level_db, b.speaker_profile,
                                     fs, int(seeds[9]), cal)
        speaker_present = True
        speaker_content = speaker_content or b.content
        speaker_profile = speaker_profile or b.speaker_profile

    if spec.gusts_level_db is not None:
        d_mix = d_mix + scale_to_level(gust_noise(_rng_from(seeds[9], 99), n,
                                                  fs),
                                       spec.gusts_level_db, cal)

    peak = max(np.max(np.abs(d_mix)), np.max(np.abs(c_mix)))
    if peak > 1.0:
        raise InvalidScenario(
            f"staged levels clip the digital range (peak {peak:.2f}); lower "
            "the levels or raise the calibration offset"
        )

    d_clip = AudioClip(d_mix, fs, Origin.DRONE_SIDE)
    c_clip = AudioClip(c_mix, fs, Origin.VERIFIER_SIDE)
    return WorldOutput(
        drone_side_clip=d_clip,
        verifier_side_clip=c_clip,
        drone_side_level=measure_level(d_clip, cal),
        ground_truth=GroundTruth(
            is_attack=kind is not AttackKind.NONE,
            attack_kind=kind,
            commanded_f0_track=f0_track[delay:delay + n],
            speaker_present=speaker_present,
            speaker_content=speaker_content,
            speaker_profile=speaker_profile,
        ),
    )


class ScenarioWorld:
    """Acoustic world for the protocol: one scenario, fresh audio per attempt."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec

    def attempt(self, k: int) -> WorldOutput:
        seed = int(np.random.SeedSequence([self.spec.seed, 9000 + k])
                   .generate_state(1, dtype=np.uint64)[0])
        return stage_scenario(replace(self.spec, seed=seed))


class FixedWorld:
    """Scripted world handing out pre-built attempts (tests)."""

    def __init__(self, outputs):
        self.outputs = list(outputs)

    def attempt(self, k: int) -> WorldOutput:
        if k >= len(self.outputs):
            raise WorldExhausted(f"no recording for attempt {k}")
        return self.outputs[k]


# --- corpus plans ------------------------------------------------------------

@dataclass(frozen=True)
class CorpusPlan:
    """Accuracy-style corpus: simultaneous positive pairs per drone plus
    cross-paired negatives.

    Every positive pair is crossed with crossings_per_positive positive
    pairs of other drones, yielding the two swapped negatives (c1,d2) and
    (c2,d1) per crossing.
    """

    n_drones: int = 8
    pairs_per_drone: int = 250
    seed: int = 0
    duration_s: float = 3.0
    verifier_distance_m: float = 5.0
    environments: tuple[Environment, ...] = (
        Environment.QUIET, Environment.HIGHWAY, Environment.PARTY,
        Environment.PLAZA, Environment.LAWNMOWER)
    crossings_per_positive: int = 1
    essential_freq_low_hz: float = 330.0
    essential_freq_high_hz: float = 430.0

    def __post_init__(self):
        if self.n_drones < 2:
            raise InvalidScenario("need at least two drones to cross-pair")
        if not (1 <= self.crossings_per_positive <= self.n_drones - 1):
            raise InvalidScenario(
                "crossings_per_positive must be in [1, n_drones-1]")

    def drone_specs(self) -> list[DroneSpec]:
        freqs = np.linspace(self.essential_freq_low_hz,
                            self.essential_freq_high_hz, self.n_drones)
        seeds = _child_seeds(self.seed, self.n_drones)
        return [DroneSpec(essential_freq_hz=float(f), imperfection_seed=int(s))
                for f, s in zip(freqs, seeds)]

    def positive_scenario(self, drone_idx: int, pair_idx: int) -> ScenarioSpec:
        env = self.environments[pair_idx % len(self.environments)]
        seed = int(np.random.SeedSequence(
            [self.seed, 17, drone_idx, pair_idx]).generate_state(
                1, dtype=np.uint64)[0])
        return ScenarioSpec(
            drone=self.drone_specs()[drone_idx],
            verifier_distance_m=self.verifier_distance_m,
            environment=env,
            duration_s=self.duration_s,
            seed=seed,
        )


@dataclass(frozen=True)
class CorpusRow:
    pair_id: str
    label: int
    c_ref: tuple[int, int]   # (drone_idx, pair_idx) providing the verifier clip
    d_ref: tuple[int, int]   # (drone_idx, pair_idx) providing the drone clip
    group: str               # d-side drone, the unit claimed to be present


def corpus_rows(plan: CorpusPlan) -> list[CorpusRow]:
    """Positive and cross-paired negative rows in render-friendly order."""
    rows = []
    P = plan.pairs_per_drone
    n = plan.n_drones
    k = plan.crossings_per_positive
    for i in range(P):
        for a in range(n):
            rows.append(CorpusRow(f"pos_d{a}_p{i}", 1, (a, i), (a, i),
                                  f"drone{a}"))
        for a in range(n):
            for c in range(k):
                b = (a + 1 + c) % n
                j = (i + 1 + c) % P
                rows.append(CorpusRow(f"neg_d{a}p{i}_d{b}p{j}_c", 0,
                                      (a, i), (b, j), f"drone{b}"))
                rows.append(CorpusRow(f"neg_d{a}p{i}_d{b}p{j}_d", 0,
                                      (b, j), (a, i), f"drone{a}"))
    return rows


@dataclass(frozen=True)
class SpeakerCorpusPlan:
    """Liveness/content study corpus: live sessions, loudspeaker replays of
    drone noise, and benign loudspeaker playback (music/news), across
    speaker profiles and playback levels."""

    n_live: int = 150
    n_replay: int = 150
    n_benign: int = 150
    seed: int = 0
    duration_s: float = 3.0
    verifier_distance_m: float = 5.0
    levels_db: tuple[float, ...] = (60.0, 65.0, 70.0, 75.0)
    profiles: tuple[str, ...] = ("compact", "bookshelf", "horn")
    essential_freq_low_hz: float = 330.0
    essential_freq_high_hz: float = 430.0
    n_drones: int = 4

    def drone_specs(self) -> list[DroneSpec]:
        freqs = np.linspace(self.essential_freq_low_hz,
                            self.essential_freq_high_hz, self.n_drones)
        seeds = _child_seeds(self.seed + 1, self.n_drones)
        return [DroneSpec(essential_freq_hz=float(f), imperfection_seed=int(s))
                for f, s in zip(freqs, seeds)]

    def scenarios(self) -> list[tuple[str, ScenarioSpec]]:
        drones = self.drone_specs()
        envs = list(Environment)
        out = []

        def _seed(tag, idx):
            return int(np.random.SeedSequence([self.seed, tag, idx])
                       .generate_state(1, dtype=np.uint64)[0])

        for i in range(self.n_live):
            out.append((f"live_{i}", ScenarioSpec(
                drone=drones[i % len(drones)],
                verifier_distance_m=self.verifier_distance_m,
                environment=envs[i % len(envs)],
                duration_s=self.duration_s,
                seed=_seed(21, i))))
        for i in range(self.n_replay):
            out.append((f"replay_{i}", ScenarioSpec(
                drone=drones[i % len(drones)],
                verifier_distance_m=self.verifier_distance_m,
                environment=envs[i % len(envs)],
                attack=AttackSpec(
                    kind=AttackKind.VERIFIER_RELAY,
                    level_db=self.levels_db[i % len(self.levels_db)],
                    speaker_profile=self.profiles[i % len(self.profiles)]),
                duration_s=self.duration_s,
                seed=_seed(22, i))))
        for i in range(self.n_benign):
            out.append((f"benign_{i}", ScenarioSpec(
                drone=drones[i % len(drones)],
                verifier_distance_m=self.verifier_distance_m,
                environment=envs[i % len(envs)],
                benign_speaker=BenignSpeaker(
                    content="music" if i % 2 == 0 else "news",
                    level_db=self.levels_db[i % len(self.levels_db)],
                    speaker_profile=self.profiles[i % len(self.profiles)]),
                duration_s=self.duration_s,
                seed=_seed(23, i))))
        return out
