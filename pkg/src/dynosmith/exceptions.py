"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter or configuration value is structurally invalid."""


class DegenerateSignalError(ValueError):
    """The signal carries no information for the requested operation
    (e.g. an identically zero trajectory cannot define relative noise)."""


class DivergenceError(RuntimeError):
    """Integration exceeded the magnitude bound before the horizon.

    Attributes
    ----------
    time : float
        Time at which the bound was first exceeded.
    """

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class NumericalError(RuntimeError):
    """A linear-algebra step failed (e.g. a factorization broke down).

    Attributes
    ----------
    rho : float or None
        Smoothing ratio active when the failure occurred, if applicable.
    """

    def __init__(self, message, rho=None):
        super().__init__(message)
        self.rho = rho
