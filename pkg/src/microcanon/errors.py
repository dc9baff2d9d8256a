"""Exception and warning types shared across the package."""


class MicrocanonError(Exception):
    """Base class for all errors raised by microcanon."""


class UsageError(MicrocanonError, ValueError):
    """Bad arguments, unknown names, or mismatched dimensions."""


class NumericDomainError(MicrocanonError, ArithmeticError):
    """A computation left the domain where its result is meaningful."""


class EmptyShellError(NumericDomainError):
    """No proposal landed inside the requested energy shell."""


class RangeTooSmallError(NumericDomainError):
    """The energy grid does not cover enough of the integrand."""


class InvertibilityError(NumericDomainError):
    """A tabulated function that must be strictly monotone is not."""


class FlowBlowUpError(NumericDomainError):
    """A trajectory left the divergence guard radius.

    ``time`` is the first checked time the guard was exceeded and ``index``
    the offending trajectory within the batch.
    """

    def __init__(self, message, time, index):
        super().__init__(message)
        self.time = time
        self.index = index


class IntegratorError(MicrocanonError, RuntimeError):
    """The implicit integrator's Newton iteration failed to converge."""


class MicrocanonWarning(UserWarning):
    pass


class CriticalValueWarning(MicrocanonWarning):
    """The energy is at or near a critical value of H."""


class ShellTruncationWarning(MicrocanonWarning):
    """Accepted shell points touch the sampling box boundary."""


class BoundaryMassWarning(MicrocanonWarning):
    """A significant part of the Boltzmann weight sits near the box boundary."""


class UndersamplingWarning(MicrocanonWarning):
    pass
