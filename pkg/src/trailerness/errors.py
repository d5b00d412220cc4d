"""Exception hierarchy shared across the package.

Every error raised on a user-facing path derives from TrailernessError so the
CLI can map failures to stable exit codes.
"""


class TrailernessError(Exception):
    exit_code = 1


class InvalidInputError(TrailernessError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 2


class FileFormatError(TrailernessError):
    """A binary or text artifact does not parse."""

    exit_code = 3


class BadMagicError(FileFormatError):
    pass


class TruncatedPayloadError(FileFormatError):
    pass


class NonFiniteValuesError(FileFormatError):
    pass


class CountMismatchError(FileFormatError):
    """Unit count or dimensionality disagrees with the paired timeline."""

    pass


class MissingArtifactError(TrailernessError):
    """A pipeline stage requires an artifact an earlier stage has not produced."""

    exit_code = 4
