"""Exceptions raised by thinlab services."""


class EigenConvergenceError(RuntimeError):
    """Inverse iteration did not reach the requested tolerance."""

    def __init__(self, residual: float, iterations: int) -> None:
        super().__init__(
            f"eigenvalue iteration did not converge after {iterations} iterations "
            f"(relative change {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


class PdeInstabilityError(RuntimeError):
    """Surviving mass grew during absorbing time stepping."""


class BridgeConsistencyError(RuntimeError):
    """A refined bridge disagrees with an already-sampled value."""


class ScenarioConfigError(ValueError):
    """A scenario config file could not be parsed or names an unknown key."""

    def __init__(self, message: str, line: int | None = None) -> None:
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line = line
