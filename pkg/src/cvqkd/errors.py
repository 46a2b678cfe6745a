"""Exception hierarchy shared by every stage of the pipeline."""


class CvqkdError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CvqkdError, ValueError):
    """Invalid parameter or scenario value.

    ``field`` names the offending configuration key when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class PipelineError(CvqkdError, RuntimeError):
    """A processing stage failed on otherwise valid input."""

    def __init__(self, message, frame_index=None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index


# calibration / units
class DegenerateCalibration(PipelineError):
    pass


class NegativeLoss(ConfigError):
    pass


# transmitter / channel
class AliasRisk(ConfigError):
    pass


class SpectralOverlap(ConfigError):
    pass


# receiver DSP
class SingularPsd(PipelineError):
    pass


class PilotNotFound(PipelineError):
    pass


class UnwrapFailure(PipelineError):
    pass


class DivergenceDetected(PipelineError):
    pass


class SyncFailure(PipelineError):
    pass


# estimation / security
class NegativeTransmittance(PipelineError):
    pass


class InsufficientData(PipelineError):
    pass


class NumericalInstability(PipelineError, ArithmeticError):
    pass


class DomainError(CvqkdError, ValueError):
    pass


class NoPositiveRate(PipelineError):
    pass


# harness
class MissingArtifact(PipelineError):
    pass


class IntegrityError(MissingArtifact):
    """Artifact exists but its checksum does not match the manifest."""
