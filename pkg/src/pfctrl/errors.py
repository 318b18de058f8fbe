"""Exception types raised across the package."""


class PFCtrlError(Exception):
    """Base class for all package errors."""


class NotControllable(PFCtrlError):
    pass


class NotObservable(PFCtrlError):
    pass


class IllConditioned(PFCtrlError):
    pass


class OrderUnavailable(PFCtrlError):
    """A gain derivative was requested beyond the signal's guaranteed smoothness."""


class BadSchedule(PFCtrlError):
    pass


class NotPE(PFCtrlError):
    """The gain carries no excitation over the inspected horizon."""


class NotDivisible(PFCtrlError):
    """A coefficient expression cannot be divided by the gain ``g``.

    Raised when the filter exponent ``k`` is too small for the block size.
    """


class MissingDownstreamControl(PFCtrlError):
    pass


class UnsupportedStructure(PFCtrlError):
    """The canonical structure needs a feature the monomial algebra does not cover."""


class NonPositiveRate(PFCtrlError):
    pass


class NonFiniteState(PFCtrlError):
    def __init__(self, t, index, message=None):
        self.t = t
        self.index = index
        super().__init__(message or f"non-finite state component {index} at t={t:.6g}")


class DegenerateFit(PFCtrlError):
    pass


class ConfigError(PFCtrlError):
    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
