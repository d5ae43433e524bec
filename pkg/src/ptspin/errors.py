"""Exception types shared across the package."""


class PtSpinError(Exception):
    """Base class for all package errors."""


class NumericalError(PtSpinError):
    """A computation left its numerically trustworthy range."""


class ExpmOverflowError(NumericalError):
    """The matrix exponential would overflow double precision."""


class IntegrationError(NumericalError):
    """An ODE integration stopped before reaching its final time.

    Parameters
    ----------
    message : str
        Solver diagnostic.
    last_time : float
        Last time reached with an accepted step.
    """

    def __init__(self, message, last_time):
        super().__init__(f"{message} (last good time t={last_time:.17g})")
        self.last_time = last_time


class TraceVanishedError(NumericalError):
    """tr(rho) fell below the representable threshold."""


class ConfigError(PtSpinError):
    """Invalid scenario configuration."""
