"""Exception types raised by sspdsim."""


class SSPDError(Exception):
    """Base class for all sspdsim errors."""


class DomainError(SSPDError, ValueError):
    """An argument lies outside the domain of a physical formula."""


class ConfigurationError(SSPDError, ValueError):
    """Detector, curve or run configuration violates an invariant."""


class CurveFormatError(ConfigurationError):
    """Efficiency-curve data is malformed; ``row`` is the offending row index."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class WorkBudgetError(SSPDError, RuntimeError):
    """The untruncated O(N^2) recursion would exceed the work budget."""


class ConvergenceError(SSPDError, RuntimeError):
    """Steady state was not reached; ``trace`` holds the last computed trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SearchError(SSPDError, RuntimeError):
    """A bracketed search failed; ``diagnostics`` describes the bracket."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SweepPointError(SSPDError, RuntimeError):
    """An inner computation failed at one point of a power sweep."""

    def __init__(self, power_dbm, cause):
        super().__init__(f"power sweep failed at {power_dbm!r} dBm: {cause}")
        self.power_dbm = power_dbm
