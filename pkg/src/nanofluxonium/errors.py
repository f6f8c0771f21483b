class FluxoniumError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(FluxoniumError, ValueError):
    """An input lies outside its physical or numerical domain."""


class ConvergenceError(FluxoniumError, RuntimeError):
    """A numerical procedure did not reach its tolerance.

    ``diagnostics`` carries whatever the failing routine could report
    (residuals, eigenvalue deltas, suggested settings).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class AssignmentError(FluxoniumError, ValueError):
    """Drive tones cannot be mapped onto a consistent rotating frame."""
