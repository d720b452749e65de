"""Exception types shared across the package."""


class SwitchMracError(Exception):
    """Base class for all library errors."""


class DimensionError(SwitchMracError):
    """Matrix/vector shapes do not match the operation's contract."""


class SingularMatrixError(SwitchMracError):
    """Inversion was requested for a (numerically) singular matrix."""

    def __init__(self, message, det_value=0.0):
        super().__init__(message)
        self.det_value = det_value


class AsymmetricMatrixError(SwitchMracError):
    """A symmetric-only routine received an asymmetric matrix."""


class TemporalOrderError(SwitchMracError):
    """Time arguments violate the required ordering (e.g. backwards reset)."""


class MatchingConditionError(SwitchMracError):
    """No state-feedback gains reproduce the reference model for a segment."""


class FiniteEscapeError(SwitchMracError):
    """The plant state blew past the divergence guard during integration."""

    def __init__(self, message, t_abort=None):
        super().__init__(message)
        self.t_abort = t_abort


class ConfigError(SwitchMracError):
    """Scenario configuration is malformed or fails validation."""

    def __init__(self, message, path=None):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
