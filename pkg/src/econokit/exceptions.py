"""Exception hierarchy shared by every analysis module."""


class EconokitError(Exception):
    """Base class for all toolkit errors."""


class DataError(EconokitError, ValueError):
    """Input data violates a precondition (bad file, bad values, bad range)."""


class DegenerateError(DataError):
    """The input is structurally degenerate for the requested estimate."""
