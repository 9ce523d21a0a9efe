"""Exception hierarchy shared by the numeric and I/O layers."""


class NMHMMError(Exception):
    """Base class for every error raised by nmhmm."""


class DomainError(NMHMMError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateComponentError(NMHMMError, ArithmeticError):
    """A mixture component carries zero total responsibility."""


class NumericFailureError(NMHMMError, ArithmeticError):
    """An iterative solver did not converge.

    The last iterate is available as ``last``.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ImpossibleObservationError(NMHMMError, ArithmeticError):
    """Every hidden state assigns zero likelihood to some window."""

    def __init__(self, window):
        super().__init__(f"window {window} has zero likelihood under every state")
        self.window = window


class FitFailureError(NMHMMError, RuntimeError):
    """All Baum-Welch restarts failed."""

    def __init__(self, message, traces=()):
        super().__init__(message)
        self.traces = list(traces)


class TrackFormatError(NMHMMError, ValueError):
    """A count, mask, or scenario file is malformed."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
