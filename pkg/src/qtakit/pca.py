"""Principal component analysis with a variance-target component choice."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["PcaModel", "pca_fit", "pca_transform"]


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,)
    explained_ratio: float
    k: int


def pca_fit(X: np.ndarray, variance_target: float = 0.99, n_components: int | None = None) -> PcaModel:
    """Fit mean-centered PCA.

    Keeps the minimal k whose cumulative explained variance reaches
    ``variance_target``, unless ``n_components`` pins k directly.
    Eigenvalues of a rank-deficient covariance are floored at zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("pca_fit needs a 2-D matrix with at least 2 rows")
    if not 0.0 < variance_target <= 1.0:
        raise ValidationError("variance_target must be in (0, 1]")
    n, d = X.shape
    mean = X.mean(axis=0)
    _, svals, vt = np.linalg.svd(X - mean, full_matrices=False)
    variances = np.maximum(svals**2 / (n - 1), 0.0)
    total = float(variances.sum())

    max_k = len(variances)
    if n_components is not None:
        if n_components < 1:
            raise ValidationError("n_components must be >= 1")
        k = min(n_components, max_k)
    elif total == 0.0:
        k = 1  # all rows identical; a single arbitrary direction
    else:
        ratios = np.cumsum(variances) / total
        k = int(np.searchsorted(ratios, variance_target - 1e-12) + 1)
        k = min(k, max_k)

    ratio = 1.0 if total == 0.0 else float(variances[:k].sum() / total)
    return PcaModel(
        mean=mean,
        components=vt[:k],
        explained_variance=variances[:k],
        explained_ratio=ratio,
        k=k,
    )


def pca_transform(model: PcaModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.mean.shape[0]:
        raise ValidationError(
            f"feature dimension {X.shape[-1]} does not match the fitted model "
            f"({model.mean.shape[0]})"
        )
    return (X - model.mean) @ model.components.T
