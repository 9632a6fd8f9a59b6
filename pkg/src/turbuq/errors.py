"""Exception hierarchy shared by all turbuq modules.

The CLI maps these onto process exit codes: configuration and schema
problems exit 2, bad data exits 3, numerical divergence exits 4.
"""


class TurbuqError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TurbuqError):
    """Invalid configuration: missing keys, bad values, absent files."""


class SchemaError(ConfigError):
    """A required column role or schema entry could not be resolved."""


class DataError(TurbuqError):
    """Input data violates an invariant (non-numeric cells, negative k, ...)."""


class PairingError(DataError):
    """Two per-point fields that must be co-indexed do not match up."""


class DomainError(DataError, ValueError):
    """An operation was called with arguments outside its domain."""


class ModelLoadError(DataError):
    """A model file is malformed or inconsistent with its declared shapes."""


class DivergenceError(TurbuqError):
    """Training produced a non-finite loss."""
