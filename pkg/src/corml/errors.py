"""Exception and warning types shared across the package."""


class CormlError(Exception):
    """Base class for all library errors."""


class UsageError(CormlError):
    """Invalid arguments or configuration (CLI exit code 1)."""


class DataFormatError(CormlError):
    """Malformed input data or model file (CLI exit code 2)."""


class VersionMismatchError(DataFormatError):
    """Model file magic or version not recognized."""


class TruncatedFileError(DataFormatError):
    """Model file shorter than its header declares."""


class ChecksumError(DataFormatError):
    """Model file payload does not match its trailing checksum."""


class FactorizationError(CormlError):
    """A required matrix factorization failed (CLI exit code 3)."""


class ConvergenceWarning(UserWarning):
    """Solver stopped at the iteration cap before meeting its tolerance."""
