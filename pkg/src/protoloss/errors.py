"""Exception types shared across the package."""


class ProtolossError(Exception):
    """Base class for all errors raised by protoloss."""


class ContractError(ProtolossError, ValueError):
    """A caller violated an operation's precondition (shape, label range, ...)."""


class ConfigError(ProtolossError, ValueError):
    """Invalid configuration value. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ParseError(ProtolossError, ValueError):
    """Malformed input file. ``line`` is 1-based."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class DegeneratePrototypeError(ProtolossError, ArithmeticError):
    """A prototype row has (near) zero norm, so its direction is undefined."""


class NoNegativeError(ProtolossError, ValueError):
    """Negative prototype requested with a single class."""


class TrainingDiverged(ProtolossError, ArithmeticError):
    """Loss or parameters became non-finite. ``state`` holds diagnostics."""

    def __init__(self, message: str, state: dict):
        self.state = state
        super().__init__(message)
