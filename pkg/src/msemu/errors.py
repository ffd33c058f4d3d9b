"""Exception types raised across the package."""


class MsemuError(Exception):
    """Base class for all package errors."""


class ArgumentError(MsemuError, ValueError):
    """An argument violates an operation's precondition."""


class UnsupportedFamilyError(ArgumentError):
    pass


class ConditioningError(MsemuError):
    """A linear system could not be solved or factorized reliably.

    ``diagnostics`` carries whatever was known at the point of failure
    (Gershgorin cap, separation distance, pivot information, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ResourceError(MsemuError):
    """An assembly would exceed the configured memory budget."""

    def __init__(self, message, estimated_nnz=None):
        super().__init__(message)
        self.estimated_nnz = estimated_nnz


class CapabilityError(MsemuError):
    """The requested computation is not available on this path."""


class InfeasibleError(MsemuError):
    """A bound's precondition (e.g. kappa * delta_A < 1) does not hold."""


class FitError(MsemuError):
    """A stage of the multi-step fit failed."""

    def __init__(self, message, stage=None, diagnostics=None):
        super().__init__(message)
        self.stage = stage
        self.diagnostics = dict(diagnostics or {})


class SelectionError(MsemuError):
    """Every candidate of a parameter search failed."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures or [])


class FormatError(MsemuError):
    """A serialized file is malformed or has an incompatible version."""


class StateError(MsemuError):
    pass
