"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """Raised for invalid scenario configuration (bad value or unknown key)."""


class ActionSpaceError(Exception):
    """Raised when exact action enumeration would exceed the configured cap."""


class ConvergenceError(Exception):
    """Raised when an iterative solver fails to reach its tolerance.

    Carries the last residual so callers can report how far off it was.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
