"""Exception hierarchy shared across the package."""


class PyrocastError(Exception):
    """Base class for all package errors."""


class DimensionError(PyrocastError):
    """Tensor or layer shapes are incompatible."""


class DomainError(PyrocastError):
    """A value is outside the mathematical domain of an operation."""


class ContractError(PyrocastError):
    """A caller violated an API precondition."""


class ConfigError(PyrocastError):
    """Invalid experiment or model configuration."""


class SchemaError(PyrocastError):
    """A dataset file does not match the expected column schema."""


class ParseError(PyrocastError):
    """A dataset cell could not be parsed; carries row/column coordinates."""


class ManifestError(PyrocastError):
    """A weight archive manifest does not match the expected parameter set."""


class ArchiveFormatError(PyrocastError):
    """A weight archive file is malformed."""


class DivergenceError(PyrocastError):
    """Training produced a NaN loss or gradient."""
