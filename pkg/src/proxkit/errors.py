"""Exception types shared across the package.

The CLI maps these onto process exit codes: DataError -> 3,
ArtifactError -> 4. Plain ValueError is reserved for programming-level
precondition violations (bad argument shapes, invalid parameter ranges).
"""


class DataError(Exception):
    """Input data is missing, unreadable, or semantically invalid."""


class ArtifactError(Exception):
    """A persisted artifact is missing, corrupt, or of the wrong type."""
