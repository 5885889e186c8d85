"""Exception types shared across the package."""


class SinaiError(Exception):
    """Base class for all package errors."""


class InvalidSpec(SinaiError, ValueError):
    """A distribution spec violates the mean-zero / positive-variance / support constraints."""


class OutOfWindow(SinaiError, IndexError):
    """Requested index lies outside a non-extendable realized window."""


class WindowExhausted(SinaiError):
    """A search ran into the window cap without finding what it looked for."""


class HorizonTooSmall(SinaiError, ValueError):
    """The horizon n is too small for the iterated logarithms to be positive."""


class NotFound(SinaiError):
    """No basic valley exists inside the searchable window."""


class EmptySegment(SinaiError, ValueError):
    pass


class ValleyTooNarrow(SinaiError):
    """The basic valley is too narrow for the ordered chopping to start."""


class BadInterval(SinaiError, ValueError):
    pass


class LevelOutOfRange(SinaiError, IndexError):
    pass


class GammaTooSmall(SinaiError, ValueError):
    def __init__(self, which, gamma, bound):
        self.which = which
        super().__init__(f"{which} requires gamma > {bound:g}, got {gamma:g}")


class BudgetExceeded(SinaiError):
    pass


class NoGoodEnvironmentFound(SinaiError):
    pass


class PrecisionLoss(UserWarning):
    """A closed-form evaluation lost too many digits and was replaced by a direct solve."""
