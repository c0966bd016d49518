"""Exception hierarchy shared by the solvers and the command-line harness."""


class RadDiffError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RadDiffError, ValueError):
    """Raised when inputs violate a documented precondition."""


class UnsupportedOrderError(InvalidArgumentError):
    """Raised when an expansion order above the supported maximum is requested."""


class SolverFailure(RadDiffError, RuntimeError):
    """Raised when an iterative solver does not converge.

    Parameters
    ----------
    message : str
        Human readable description.
    trace : list of float, optional
        Per-iteration convergence history (update or residual norms).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class InternalError(RadDiffError, RuntimeError):
    """Raised when an internal consistency check fails."""
