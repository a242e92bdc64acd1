"""Exception hierarchy.

The three top-level families map onto the CLI exit codes:
``ConfigError`` (2), ``PhysicsError`` (3) and ``PipelineError`` (4).
"""


class MovingSourceError(Exception):
    pass


class ConfigError(MovingSourceError, ValueError):
    pass


class PhysicsError(MovingSourceError):
    """A physical precondition of the reconstruction theory is violated."""


class NotSubsonicError(PhysicsError):
    pass


class BoundExceededError(PhysicsError):
    pass


class ObservationTooShortError(PhysicsError):
    pass


class OutsideDomainError(PhysicsError):
    pass


class SingularPairingError(PhysicsError):
    pass


class PipelineError(MovingSourceError):
    """Failure inside the forward or inverse numerics.

    ``sensor`` (1-based) and ``step`` are attached when the failure can be
    pinned to one sensor and one stage of the inversion.
    """

    def __init__(self, message, sensor=None, step=None):
        self.sensor = sensor
        self.step = step
        prefix = []
        if step is not None:
            prefix.append(f"step={step}")
        if sensor is not None:
            prefix.append(f"sensor={sensor}")
        if prefix:
            message = f"[{' '.join(prefix)}] {message}"
        super().__init__(message)


class NoConvergenceError(PipelineError):
    pass


class SourceAtSensorError(PipelineError):
    pass


class NoArrivalError(PipelineError):
    pass


class MonotonicityViolationError(PipelineError):
    pass


class NegativeFieldError(PipelineError):
    pass


class OutOfRangeError(PipelineError):
    pass


class NegativeRangeError(PipelineError):
    pass
