"""Exception types shared across the package."""


class DegenerateCalibrationError(ValueError):
    """Raised when a reward is constant over the calibration set (sigma < 1e-9)."""


class StaleStatsError(ValueError):
    """Raised when calibration stats were computed for a different task."""


class SearchConfigError(ValueError):
    """Raised for search configurations that cannot be run as given."""


class WorkerError(RuntimeError):
    """Base class for external reward worker failures."""


class WorkerSpawnError(WorkerError):
    """Worker process could not be started."""


class WorkerHandshakeError(WorkerError):
    """Worker handshake missing, malformed, or of an unsupported protocol version."""


class WorkerTimeoutError(WorkerError):
    """Worker did not answer within the deadline."""


class WorkerCrashError(WorkerError):
    """Worker exited or closed its pipe mid-session."""


class WorkerProtocolError(WorkerError):
    """Worker sent bytes that violate the wire protocol."""


class WorkerRewardError(WorkerError):
    """Worker answered a request with an error payload."""
