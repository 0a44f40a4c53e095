"""Exception types shared across the package."""


class TransecError(Exception):
    """Base class for all package errors."""


class NetworkError(TransecError):
    """Malformed network, proportions, or set-cover instance."""


class HorizonExceeded(TransecError):
    """No horizon up to h_max drains the network (e.g. a blocking attack)."""

    def __init__(self, h_max, message=None):
        self.h_max = h_max
        super().__init__(message or f"network does not drain within h_max={h_max}")


class Infeasible(TransecError):
    """The linear program has no feasible point at the given horizon."""


class NumericalFailure(TransecError):
    """The LP backend failed to converge or returned an unusable status."""


class EvaluationCapExceeded(TransecError):
    """Exhaustive search would need more oracle calls than the configured cap."""

    def __init__(self, required, cap):
        self.required = required
        self.cap = cap
        super().__init__(f"exhaustive search needs {required} evaluations, cap is {cap}")


class InsufficientData(TransecError):
    """Training trace too short for the requested period."""


class DegenerateTrace(TransecError):
    """Training trace does not contain a single full period."""


class NonPositiveDefinite(TransecError):
    """Window covariance could not be factorized even after jitter escalation."""


class MisalignedStream(TransecError):
    """Detection stream does not start on a period boundary."""
