"""Error types shared across the package.

Every error is a :class:`ValueError` so callers that only care about bad
input can keep catching ``ValueError``.  The ``category`` attribute drives
the CLI exit code.
"""

from __future__ import annotations

from pathlib import Path

EXIT_CODES = {
    "usage": 2,
    "schema": 3,
    "invariant": 4,
    "numeric": 5,
    "error": 1,
}


class LigspaceError(ValueError):
    """Base class for categorized errors."""

    category = "error"

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]


class ShapeError(LigspaceError):
    """Operand shapes are incompatible."""

    category = "invariant"


class NonFiniteError(LigspaceError):
    """An operation produced NaN or Inf."""

    category = "numeric"


class TapeError(LigspaceError):
    """Backward called without a usable tape."""

    category = "invariant"


class InvariantError(LigspaceError):
    """A module invariant does not hold.

    Args:
        invariant: Short name of the violated invariant, e.g. ``"geom.no-hydrogen"``
        message: Human readable detail
    """

    category = "invariant"

    def __init__(self, invariant: str, message: str) -> None:
        self.invariant = invariant
        super().__init__(f"{message} (invariant {invariant})")


class RecordError(LigspaceError):
    """A JSONL record is malformed or violates an invariant."""

    category = "schema"

    def __init__(self, path: str | Path, line: int, message: str) -> None:
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class SmilesError(LigspaceError):
    """SMILES text could not be parsed or tokenized."""

    category = "schema"

    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class FormatError(LigspaceError):
    """A binary file does not follow its declared layout."""

    category = "schema"


class MissingInputError(LigspaceError):
    """A required input file does not exist."""

    category = "usage"


class ConfigError(LigspaceError):
    """A configuration file or flag value is invalid."""

    category = "usage"


__all__ = [
    "EXIT_CODES",
    "LigspaceError",
    "ShapeError",
    "NonFiniteError",
    "TapeError",
    "InvariantError",
    "RecordError",
    "SmilesError",
    "FormatError",
    "MissingInputError",
    "ConfigError",
]
