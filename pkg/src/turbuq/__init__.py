"""turbuq: data-driven eigenvalue perturbation bounds for RANS uncertainty.

The package computes Reynolds stress anisotropy eigenstates and their
barycentric map coordinates from RANS fields, trains a small fully
connected network that predicts the eigenvalue perturbation magnitude
from nine non-dimensional flow features, and emits physics-constrained
perturbed Reynolds stress fields and uncertainty maps.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    DomainError,
    ModelLoadError,
    PairingError,
    SchemaError,
    TurbuqError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "DomainError",
    "ModelLoadError",
    "PairingError",
    "SchemaError",
    "TurbuqError",
]
