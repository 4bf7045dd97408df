"""Training losses over normalized per-atom targets.

Targets and predictions are (n, 10) arrays ordered as
[population, localization, mu_x, mu_y, mu_z, q_xy, q_xz, q_yz, q_an, q_zz].

Version 1 averages squared errors per property (dipole components /3,
quadrupole components /5). Version 2 weights atoms per element and
scores the dipole by its squared Euclidean norm and the quadrupole by
its squared rotation-invariant Frobenius norm.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ValidationError

__all__ = ["loss_v1", "loss_v2", "element_weights"]

# per-component coefficients implementing the per-atom bracket /4
_V1_COEFF = np.array([1, 1, 1 / 3, 1 / 3, 1 / 3, 1 / 5, 1 / 5, 1 / 5, 1 / 5, 1 / 5]) / 4.0
_V2_COEFF = np.array([1, 1, 1, 1, 1, 2, 2, 2, 2, 1.5]) / 4.0


def _check(pred, targets):
    t = np.asarray(targets, dtype=float)
    if pred.value.shape != t.shape:
        raise ValidationError(f"prediction shape {pred.value.shape} vs targets {t.shape}")
    return t


def loss_v1(pred: ad.Var, targets: np.ndarray) -> ad.Var:
    t = _check(pred, targets)
    d = pred - ad.constant(t)
    per_atom = ad.vsum(ad.square(d) * _V1_COEFF, axis=1)
    return ad.vsum(per_atom) * (1.0 / len(t))


def loss_v2(pred: ad.Var, targets: np.ndarray, weights: np.ndarray) -> ad.Var:
    t = _check(pred, targets)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(t),):
        raise ValidationError("one weight per atom required")
    if np.any(w <= 0):
        raise ValidationError("element weights must be positive")
    d = pred - ad.constant(t)
    per_atom = ad.vsum(ad.square(d) * _V2_COEFF, axis=1)
    return ad.vsum(per_atom * w) * (1.0 / float(w.sum()))


def element_weights(species: np.ndarray, mode: str = "sqrt_ratio") -> np.ndarray:
    """Per-atom weights from the element composition of a training fold.

    ``sqrt_ratio``: w_Z = sqrt(N_atoms / N_Z) (the explicit formula);
    ``sum_to_one``: w_Z = 1 / N_Z, so each element's atoms sum to one
    (the alternative normalization reading).
    """
    species = np.asarray(species)
    n_total = len(species)
    weights = np.empty(n_total, dtype=float)
    for z in np.unique(species):
        mask = species == z
        n_z = int(mask.sum())
        if mode == "sqrt_ratio":
            weights[mask] = np.sqrt(n_total / n_z)
        elif mode == "sum_to_one":
            weights[mask] = 1.0 / n_z
        else:
            raise ValidationError(f"unknown element weight mode {mode!r}")
    return weights
