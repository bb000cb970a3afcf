"""
Error types raised by moira. Everything derives from `MoiraError` so that the
command line can map failures to exit codes.
"""


class MoiraError(Exception):
    """Base class of all moira errors."""


class DimensionError(MoiraError, ValueError):
    """Array shapes do not fit together."""

    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)


class EmptySupportError(MoiraError, ValueError):
    """A masked softmax or aggregation has no unmasked entry in some row."""


class ParseError(MoiraError, ValueError):
    """Malformed input file. Carries the 1-based file row and column if known."""

    def __init__(self, message, path=None, row=None, column=None):
        location = []
        if path is not None:
            location.append(str(path))
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.path = path
        self.row = row
        self.column = column


class ConfigError(MoiraError, ValueError):
    """Invalid configuration. `field` names the offending (dotted) key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ContractError(MoiraError, ValueError):
    """A caller violated a documented precondition."""


class IntegrityError(MoiraError):
    """Input files do not match the hashes recorded in their manifest."""


class NumericalError(MoiraError, ArithmeticError):
    """A loss or parameter became non-finite."""
