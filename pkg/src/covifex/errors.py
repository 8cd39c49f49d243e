"""Exception types shared across the package.

Two failure families matter to callers (and map to CLI exit codes):
validation problems in user-supplied data or configuration, and
structural problems in binary artifact files.
"""


class ValidationError(ValueError):
    """Input data, configuration, or request content violates a contract."""


class FileFormatError(RuntimeError):
    """A feature or model file is malformed: bad magic, unsupported
    version, truncation, or checksum mismatch."""
