"""Exception and warning types shared across the package."""


class WittenExitError(Exception):
    """Base class for all package errors."""


class NonConvergence(WittenExitError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class EmptyCriticalSet(WittenExitError):
    pass


class TooCoarse(WittenExitError):
    pass


class DimensionError(WittenExitError):
    pass


class FactorizationFailure(WittenExitError):
    pass


class NoConvergence(WittenExitError):
    pass


class Inconclusive(WittenExitError):
    pass


class SignError(WittenExitError):
    pass


class NegativeMass(WittenExitError):
    pass


class DegenerateMinimum(WittenExitError):
    pass


class NegativeNormalDerivative(WittenExitError):
    pass


class SupportViolation(WittenExitError):
    pass


class IllConditioned(WittenExitError):
    pass


class EnvelopeBust(WittenExitError):
    pass


class TooFewSamples(WittenExitError):
    pass


class SparseTable(WittenExitError):
    pass


class HRangeError(WittenExitError):
    """h so small that exp(-2 kappa/h) drowns in double precision roundoff."""


class ConfigError(WittenExitError):
    pass


class ConsistencyWarning(UserWarning):
    """Mesh too coarse for the semiclassical parameter."""


class FlatBoundaryWarning(UserWarning):
    """Restriction of f to the boundary is constant on an arc."""


class Overflow(WittenExitError):
    """An exponential weight left the floating point range."""


class StepBudgetExceeded(WittenExitError):
    pass


class Disconnected(WittenExitError):
    pass
