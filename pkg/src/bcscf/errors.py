"""Exception types raised by the library.

Argument errors are plain ``ValueError``; the classes here mark failures the
CLI maps to distinct exit codes.
"""


class BCSError(Exception):
    """Base class for library errors."""


class ParseError(BCSError, ValueError):
    """A ratings file line could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DataValidationError(BCSError, ValueError):
    """Parsed data violates a dataset invariant (rating range, duplicates)."""


class NumericalError(BCSError, ArithmeticError):
    """A numerical kernel failed (non-PD system, degenerate factors)."""


class UnknownIdError(BCSError, LookupError):
    """A user or item id is not present in a model's index maps."""

    def __init__(self, kind, ident):
        self.kind = kind
        self.ident = ident
        super().__init__(f"unknown {kind} id {ident!r}")

    def __str__(self):
        return self.args[0]


class ModelFormatError(BCSError, ValueError):
    """A model file is truncated or has the wrong magic/version."""
