"""Exception hierarchy shared across the toolkit."""


class AdvbenchError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(AdvbenchError):
    """Tensor shapes do not validate under an operation's shape rule."""


class NonFiniteError(AdvbenchError):
    """A public operation produced NaN or Inf."""


class BoundsError(AdvbenchError):
    """Input values lie outside the declared valid range."""


class CapabilityError(AdvbenchError):
    """A gradient was requested from a prediction-only (black-box) model."""


class UnsupportedError(AdvbenchError):
    """The requested attack variant is not defined (e.g. targeted DeepFool)."""


class DegenerateGradientError(AdvbenchError):
    """A gradient too small to define a step direction."""


class TrainingError(AdvbenchError):
    """Training aborted (NaN loss or invalid configuration)."""


class FormatError(AdvbenchError):
    """A file failed to parse: corrupt data or structural violation."""


class VersionError(FormatError):
    """A file declares a format version this build does not understand."""


class CleanMisclassifiedError(AdvbenchError):
    """Robustness search requires the clean example to be classified correctly."""


class TransportError(AdvbenchError):
    """Remote endpoint unreachable after retries."""


class ProtocolError(AdvbenchError):
    """Remote endpoint returned a non-success status."""

    def __init__(self, status, code, detail):
        super().__init__(f"server returned {status}: {code}: {detail}")
        self.status = status
        self.code = code
        self.detail = detail


class ConfigError(AdvbenchError):
    """A run configuration failed schema validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
