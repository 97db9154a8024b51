"""Exception hierarchy shared by all modules."""


class FracRenewError(Exception):
    """Base class for library errors."""


class DomainError(FracRenewError, ValueError):
    """An argument lies outside the domain of the operation."""


class NonConvergent(FracRenewError, ArithmeticError):
    """A series or iteration did not meet its stopping rule."""


class InversionUnstable(FracRenewError, ArithmeticError):
    """Numerical Laplace inversion overflowed or exceeded its tolerance."""


class RootFindFailure(FracRenewError, ArithmeticError):
    pass


class ConvolutionAccuracy(FracRenewError, ArithmeticError):
    """A grid convolution could not certify the requested accuracy."""


class GridMismatch(FracRenewError, ValueError):
    pass


class GridOverflow(FracRenewError, ValueError):
    pass


class FitUnstable(FracRenewError, ArithmeticError):
    pass


class QuadratureFailure(FracRenewError, ArithmeticError):
    pass
