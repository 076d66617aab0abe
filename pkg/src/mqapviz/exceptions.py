class LoadError(ValueError):
    """Raised when an input file is malformed. The message names the line or byte offset."""


class ParameterError(ValueError):
    pass


class FormatVersionError(LoadError):
    """An intermediate file was written by an incompatible format version."""
