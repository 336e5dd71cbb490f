"""Exception types shared across the package."""


class FpgError(Exception):
    pass


class DomainError(FpgError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(FpgError, ValueError):
    """Array shapes or support sizes disagree."""


class UndefinedDivergenceError(FpgError, ValueError):
    """The divergence needs f'(inf) but the generator does not define it."""


class SignalError(FpgError, ValueError):
    """A learning signal came out non-finite."""


class StalePolicyError(FpgError, RuntimeError):
    """Importance ratios against the behaviour policy are too large to trust."""


class UnsupportedError(FpgError, TypeError):
    """The operation is not available for this kind of object."""


class NumericError(FpgError, FloatingPointError):
    pass
