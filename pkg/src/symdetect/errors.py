"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SymdetectError(Exception):
    exit_code = 1


class ConfigError(SymdetectError, ValueError):
    exit_code = 2


class ParameterError(ConfigError):
    """Bad argument to a library call (fraction, k, odd P, ...)."""


class DataError(SymdetectError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    pass


class ValidationError(DataError):
    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            head += f"; ... ({more} more)"
        super().__init__(f"dataset failed validation: {head}")


class DimensionError(DataError):
    pass


class PairingError(ParameterError):
    pass


class NumericError(SymdetectError, ArithmeticError):
    exit_code = 4
