"""Exception types raised across the package."""


class HetRobustError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(HetRobustError, ValueError):
    pass


class RankDeficient(HetRobustError, ValueError):
    pass


class NotScalarRestriction(HetRobustError, ValueError):
    pass


class DegenerateReduction(HetRobustError, ValueError):
    pass


class AssumptionViolated(HetRobustError):
    pass


class InfeasibleModel(HetRobustError, ValueError):
    pass


class FeasibilityRefused(HetRobustError):
    """Raised when a critical value is requested for a statistic whose size is 1 for every C."""


class PluginMissing(HetRobustError):
    pass


class AccuracyNotReached(HetRobustError):
    """The characteristic-function inversion could not certify the requested accuracy."""

    def __init__(self, message, value=None, bound=None):
        super().__init__(message)
        self.value = value
        self.bound = bound


class NotConverged(HetRobustError):
    """The critical-value line search hit its iteration cap."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
