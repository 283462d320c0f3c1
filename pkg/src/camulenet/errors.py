"""Exception hierarchy shared across the pipeline."""


class CamulenetError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(CamulenetError):
    """Invalid or inconsistent configuration value."""


class ShapeError(CamulenetError):
    """Array shapes incompatible with the requested operation."""


class EmptyAudio(CamulenetError):
    """Audio clip with no samples."""


class CorruptAudio(CamulenetError):
    """Audio contains NaN/Inf samples or an unreadable container."""


class EmptyInput(CamulenetError):
    """Empty feature matrix where at least one frame is required."""


class EmptySequence(CamulenetError):
    """Zero-length sequence fed to a recurrent layer."""


class EmptySplit(CamulenetError):
    """Training or validation split contains no items."""


class DivergedError(CamulenetError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"loss diverged (non-finite) at epoch {epoch}")


class SpeakerLeakError(CamulenetError):
    """A held-out speaker's clip appeared in the training stream."""


class InsufficientSpeakers(CamulenetError):
    """Fewer distinct speakers than requested folds."""


class ManifestError(CamulenetError):
    """One or more invalid manifest rows; carries all offending rows."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid manifest:\n" + "\n".join(self.problems))


class LabelError(CamulenetError):
    """Class label outside the configured range."""


class UndefinedKappa(CamulenetError):
    """Fleiss kappa undefined (all rating mass in a single category)."""


class CorruptFile(CamulenetError):
    """Tensor file failed CRC or structural validation."""


class ManifestMismatch(CamulenetError):
    """Tensor file metadata does not match the expected clip."""
