"""Exception hierarchy shared by every module in the package."""


class ProxTraceError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(ProxTraceError, ValueError):
    """Input rejected before any state was touched."""


class TransitionError(ValidationError):
    """Health status update that does not follow susceptible -> infected -> recovered."""


class NoObservationsError(ValidationError):
    """An area risk score was requested for zero observations; the score is undefined."""


class ScoreRangeError(ValidationError):
    """A risk score outside [0, 1] cannot be classified."""


class UnknownDeviceError(ProxTraceError, LookupError):
    """A device identity was not found where one was required."""


class AuthorizationError(ProxTraceError):
    """Credential not accepted for a staff-only operation."""


class OtcError(ProxTraceError):
    """Base class for one-time-code failures."""


class InvalidOtcError(OtcError):
    """The presented code was never issued."""


class OtcReplayError(OtcError):
    """The presented code was already consumed by an earlier operation."""


class AlreadyRegisteredError(ProxTraceError):
    """The device is registered and cannot be registered twice."""
