"""Exception types raised across the package.

Each class corresponds to a named failure mode of one public operation;
they all derive from :class:`DfsvmError` so callers can catch broadly.
"""


class DfsvmError(Exception):
    """Base class for all package errors."""


# data_io
class MissingSeries(DfsvmError):
    pass


class UnparseableDate(DfsvmError):
    pass


class RaggedPanel(DfsvmError):
    pass


class NonPositiveValue(DfsvmError):
    pass


class ConstantSeries(DfsvmError):
    pass


class OriginOutOfRange(DfsvmError):
    pass


# model
class NonStationaryParams(DfsvmError):
    pass


class DimensionMismatch(DfsvmError):
    pass


class NonFiniteDensity(DfsvmError):
    pass


class IndexOutOfRange(DfsvmError):
    pass


# statespace
class SingularInnovationCovariance(DfsvmError):
    pass


class SizeGuardExceeded(DfsvmError):
    pass


class SingularCovariance(DfsvmError):
    pass


# mcmc
class NonPositiveShrinkage(DfsvmError):
    pass


class SingularDesign(DfsvmError):
    pass


class NonPositiveDefinitePosteriorCov(DfsvmError):
    pass


class NumericalOverflow(DfsvmError):
    pass


class DegenerateProposal(DfsvmError):
    pass


class TooShortTrace(DfsvmError):
    pass


class DegenerateTrace(DfsvmError):
    pass


class EmptyTrace(DfsvmError):
    pass


# forecast / evaluation
class NoDraws(DfsvmError):
    pass


class LengthMismatch(DfsvmError):
    pass


class ZeroBenchmark(DfsvmError):
    pass


class DegenerateDifferential(DfsvmError):
    pass


class InsufficientModels(DfsvmError):
    pass
