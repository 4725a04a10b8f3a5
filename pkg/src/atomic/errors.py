"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class AtomicError(Exception):
    """Base class for all pipeline errors."""


# --- input parsing / validation -------------------------------------------

class AlgorithmParseError(AtomicError):
    """Diagnostic for a malformed algorithm file, located by line and column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class EmptyAlgorithm(AlgorithmParseError):
    pass


class MalformedToken(AlgorithmParseError):
    pass


class SectionCountMismatch(AlgorithmParseError):
    pass


class DuplicateDeviceInStep(AlgorithmParseError):
    pass


class IndexOutOfRange(AlgorithmParseError):
    pass


class ConfigError(AtomicError):
    pass


class MissingKey(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class BadOutputVectorLength(ConfigError):
    pass


class UnknownTopologyName(ConfigError):
    pass


class RoleReferencesUndeclaredMemristor(ConfigError):
    pass


class TopologyError(AtomicError):
    """Malformed topology or parameter file."""


class StepCountMismatch(AtomicError):
    pass


class TopologyMismatch(AtomicError):
    pass


class ElectricalPreconditionViolated(AtomicError):
    pass


# --- evaluation -----------------------------------------------------------

class UnknownOutputName(AtomicError):
    pass


class NumericalBlowup(AtomicError):
    pass


class MismatchedTimeBase(AtomicError):
    pass


class IoError(AtomicError, OSError):
    pass
