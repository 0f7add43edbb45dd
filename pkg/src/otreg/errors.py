"""Exception types shared across the package."""


class OtRegError(Exception):
    """Base class for all errors raised by otreg."""


class DegenerateCell(OtRegError, ValueError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"degenerate cell at index {index}")


class DimensionMismatch(OtRegError, ValueError):
    pass


class InvalidShape(OtRegError, ValueError):
    pass


class AngularSingularity(OtRegError, ArithmeticError):
    pass


class ZeroMass(OtRegError, ValueError):
    def __init__(self, side):
        self.side = side
        super().__init__(f"{side} measure has zero total mass")


class MassMismatch(OtRegError, ValueError):
    pass


class NotConverged(OtRegError, RuntimeError):
    """Sinkhorn hit its iteration cap; ``state`` holds the last iterate."""

    def __init__(self, state):
        self.state = state
        super().__init__(
            f"Sinkhorn did not converge in {state.iterations} iterations "
            f"(last update {state.final_update_norm:.3e})"
        )


class NonFiniteState(OtRegError, FloatingPointError):
    pass


class MissingTrajectory(OtRegError, ValueError):
    pass


class LineSearchFailure(OtRegError, RuntimeError):
    pass


class ConfigError(OtRegError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
