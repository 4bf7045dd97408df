"""Toolkit for learning and evaluating quantum-topological atomic properties.

Submodules cover the full pipeline: file ingestion (`sumviz`, `xyz`,
`smiles`, `dataset`), atomic-environment clustering (`soap`, `pca`,
`clustering`, `environments`), leakage-free cross-validation (`splits`),
the scalar message-passing regressor (`graphs`, `qtnet`, `losses`,
`training`), the repeated-measures statistics engine (`metrics`, `stats`),
and downstream experiments (`downstream`).
"""

__version__ = "0.1.0"

from .errors import (
    MissingArtifactError,
    NumericError,
    ParseError,
    QtakitError,
    ValidationError,
)

__all__ = [
    "__version__",
    "QtakitError",
    "ValidationError",
    "ParseError",
    "NumericError",
    "MissingArtifactError",
]
