"""Exception types shared across the package."""


class H2AuthError(Exception):
    """Base class for all errors raised by this package."""


# --- audio container / WAV I/O ---

class UnsupportedFormat(H2AuthError):
    """WAV file is not 16-bit PCM mono."""


class CorruptHeader(H2AuthError):
    """File is not a parseable RIFF/WAVE container."""


class SampleOutOfRange(H2AuthError, ValueError):
    """Clip contains samples outside [-1, 1]."""


class ClipTooShort(H2AuthError, ValueError):
    """Clip shorter than the requested analysis frame."""


# --- correlation / band features ---

class LengthMismatch(H2AuthError, ValueError):
    """Paired signals have different lengths."""


class EmptyInput(H2AuthError, ValueError):
    """Operation requires a non-empty input."""


class ZeroEnergySignal(H2AuthError, ValueError):
    """Signal (or band) has no energy, correlation undefined."""


class SampleRateTooLow(H2AuthError, ValueError):
    """Sample rate cannot represent the requested band edges."""


class SampleRateMismatch(H2AuthError, ValueError):
    """Clips must share one sample rate (no resampler in v1)."""


class DurationMismatch(H2AuthError, ValueError):
    """Clip durations differ by more than the allowed slack."""


class InvalidConfig(H2AuthError, ValueError):
    """Configuration violates its invariants."""


# --- liveness features ---

class ZeroTotalPower(H2AuthError, ValueError):
    """Spectrum has no power to distribute."""


class EmptyBand(H2AuthError, ValueError):
    """Band contains no spectrum bins."""


class SilentClip(H2AuthError, ValueError):
    """Clip is silent where signal content is required."""


class UnstableModel(H2AuthError):
    """Levinson-Durbin hit non-positive prediction-error power."""


# --- classifiers / evaluation ---

class SingleClassData(H2AuthError, ValueError):
    """Both classes must be present."""


class NonFiniteFeature(H2AuthError, ValueError):
    """Feature matrix contains NaN or infinity."""


class DimensionMismatch(H2AuthError, ValueError):
    """Feature vector does not match the model dimension."""


class KLargerThanDataset(H2AuthError, ValueError):
    """k exceeds the number of training points."""


class InsufficientData(H2AuthError, ValueError):
    """Not enough samples per class for the requested folds."""


class VersionMismatch(H2AuthError):
    """Model file was written by an incompatible version."""


class CorruptModel(H2AuthError):
    """Model file does not parse or is missing fields."""


class ModelKindMismatch(H2AuthError, ValueError):
    """Model trained for a different feature kind."""


# --- sound level gate ---

class NonPositiveIntensity(H2AuthError, ValueError):
    """Intensity must be > 0 to have a decibel level."""


# --- protocol ---

class MacFailure(H2AuthError):
    """Message authentication tag did not verify."""


class ProtocolViolation(H2AuthError):
    """Message kind illegal for the current session state."""


class Timeout(H2AuthError):
    """Session exceeded its step budget."""


class WorldExhausted(H2AuthError):
    """Acoustic world has no recording left for this attempt."""


# --- synth ---

class InvalidScenario(H2AuthError, ValueError):
    """Scenario specification violates its invariants."""
