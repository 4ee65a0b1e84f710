"""Exception types shared across the package."""


class MlccError(Exception):
    pass


class DimensionError(MlccError, ValueError):
    """Operand extents disagree."""


class GraphError(MlccError, RuntimeError):
    """Misuse of the gradient graph."""


class NumericError(MlccError, FloatingPointError):
    """A non-finite value showed up where finite values are required."""


class ConfigError(MlccError, ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DivergenceError(NumericError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step
