"""Exception hierarchy shared across the runtime."""
from __future__ import annotations


class QcrError(Exception):
    """Base class for every error raised by this package."""


# -- program front-end -------------------------------------------------------

class ParseError(QcrError):
    """Raised when program text cannot be turned into a valid Program.

    ``line`` and ``column`` are 1-based; either may be ``None`` when the
    problem is not tied to a location (e.g. a missing header).
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        super().__init__(loc + message)


class ProgramSyntaxError(ParseError):
    pass


class SemanticError(ParseError):
    pass


class EmptyProgram(ParseError):
    pass


# -- simulator ---------------------------------------------------------------

class SimulationError(QcrError):
    pass


class QubitCountOutOfRange(SimulationError):
    pass


class UnknownGate(SimulationError):
    pass


class QubitOutOfRange(SimulationError):
    pass


class DuplicateQubit(SimulationError):
    pass


class BadPauliString(SimulationError):
    pass


class ReplayError(SimulationError):
    """A recorded transcript cannot be reproduced by the program."""


class ZeroProbabilityOutcome(ReplayError):
    pass


class TranscriptOrderMismatch(ReplayError):
    pass


# -- checkpoint storage ------------------------------------------------------

class StoreError(QcrError):
    pass


class DigestMismatch(StoreError):
    pass


class VersionUnsupported(StoreError):
    pass


class SchemaError(StoreError):
    pass


class NotFound(StoreError):
    pass


class ParentMissing(StoreError):
    pass


class StorageIO(StoreError):
    pass


# -- restoration -------------------------------------------------------------

class RestorationError(QcrError):
    pass


class ProgramMismatch(RestorationError):
    pass


class BoundaryNotFound(RestorationError):
    pass


class RegisterMismatch(RestorationError):
    """Replayed registers disagree with the ones stored in the record."""


# -- runtime -----------------------------------------------------------------

class ConfigError(QcrError):
    """Invalid policy, failure spec, or driver configuration."""


class SpecOutOfRange(ConfigError):
    pass


class NoCheckpointAvailable(QcrError):
    pass


class InjectedFailure(QcrError):
    """Raised by the failure injector to terminate a run the way a crash would."""

    def __init__(self, kind: str, where: dict):
        self.kind = kind
        self.where = where
        super().__init__(f"injected failure {kind} at {where}")
