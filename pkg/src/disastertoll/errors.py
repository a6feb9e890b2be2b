"""Exception types shared across the package.

CLI exit codes are attached to the top-level families: usage errors exit 1,
data problems 2, optimizer failures 3.
"""
from __future__ import annotations


class DisasterTollError(Exception):
    exit_code = 1


class DataError(DisasterTollError):
    exit_code = 2


class IngestError(DataError):
    """Raised when one or more input rows fail validation.

    ``diagnostics`` holds ``(line_number, message)`` pairs, one per rejected row.
    """

    def __init__(self, path, diagnostics):
        self.path = str(path)
        self.diagnostics = list(diagnostics)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.diagnostics[:10])
        more = "" if len(self.diagnostics) <= 10 else f" (+{len(self.diagnostics) - 10} more)"
        super().__init__(f"{self.path}: {len(self.diagnostics)} rejected row(s): {lines}{more}")


class EmptyInputError(DataError):
    pass


class CoverageError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class ConvergenceError(DisasterTollError):
    exit_code = 3

    def __init__(self, message, trace=None, x=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.x = x  # last iterate, when an optimizer gave up


class DomainError(ValueError):
    pass


class BoundaryError(DomainError):
    """Tail index at or below -1: the GPD is not a valid exceedance model there."""


class NotNestedError(DisasterTollError):
    pass


class ConvergenceSuspectError(DisasterTollError):
    pass
