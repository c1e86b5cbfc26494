class M2MError(Exception):
    """Base class for every error raised by the workbench."""


class InvalidParameterError(M2MError, ValueError):
    """A parameter lies outside the domain of the operation."""


class ProtocolViolationError(M2MError):
    """A slot trace that the protocol cannot produce, or a reconstruction mismatch."""


class BudgetExceededError(M2MError):
    """An oracle was asked for more work than its budget allows."""
