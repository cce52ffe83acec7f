"""Exception types raised by the simulator."""


class NematicError(Exception):
    """Base class for all simulator errors."""


class ConfigError(NematicError, ValueError):
    """Invalid argument or unparseable run configuration."""


class ConvergenceError(NematicError):
    """An iterative linear solver failed to reach its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class FirstStepError(NematicError):
    """The nonlinear start-up step did not converge."""

    def __init__(self, message, increment=float("nan")):
        super().__init__(f"{message} (last relative increment {increment:.3e})")
        self.increment = increment


class InvariantViolation(NematicError):
    """A quantity that must hold by construction was violated at runtime."""
