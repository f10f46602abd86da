"""Exception hierarchy shared by the library and the command line.

The command line maps each family to an exit code: configuration problems
exit with 2, bad or inconsistent data with 3, numerical failures with 4.
"""


class PulsefieldError(Exception):
    exit_code = 1


class ConfigError(PulsefieldError, ValueError):
    exit_code = 2


class DataError(PulsefieldError, ValueError):
    exit_code = 3


class ShapeError(DataError):
    pass


class DegenerateInputError(DataError):
    pass


class FormatError(DataError):
    """A file is not in the expected versioned format."""


class GeometryError(DataError):
    pass


class NumericalError(PulsefieldError, ArithmeticError):
    exit_code = 4


class ModelCorruptError(NumericalError):
    pass


class NonFiniteLossError(NumericalError):
    """Training produced a non-finite loss.

    ``model`` holds the last weights for which every loss was finite and
    ``epoch`` the number of completed epochs behind them.
    """

    def __init__(self, message, model=None, epoch=None):
        super().__init__(message)
        self.model = model
        self.epoch = epoch
