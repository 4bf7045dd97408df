"""Rotation-invariant atomic-environment descriptors (power spectrum).

The neighbor density of an atom is a sum of Gaussians (smearing
``sigma``) over all atoms within ``cutoff``, the central atom
included. It is expanded per species in orthonormalized radial
Gaussians times spherical harmonics, and the descriptor is the power
spectrum over a combined symmetric (species, radial) index:

    p[(s1,n1) <= (s2,n2), l] = pi * sqrt(8/(2l+1)) * sum_m c1 conj(c2)

giving dimension M(M+1)/2 * (l_max+1) with M = n_species * n_max
(3696 for 4 species, n_max=8, l_max=6). The radial functions are
Gaussians centered uniformly on (0, cutoff], Loewdin-orthonormalized
under the r^2 measure by Gauss-Legendre quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ive

from .constants import SPECIES
from .errors import ValidationError

__all__ = ["SoapParams", "soap_dimension", "soap_descriptor", "soap_all_atoms"]

_N_QUAD = 120


@dataclass(frozen=True)
class SoapParams:
    cutoff: float
    n_max: int
    l_max: int
    sigma: float

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValidationError("cutoff must be positive")
        if self.n_max < 1:
            raise ValidationError("n_max must be >= 1")
        if self.l_max < 0:
            raise ValidationError("l_max must be >= 0")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")


def soap_dimension(params: SoapParams, n_species: int = len(SPECIES)) -> int:
    m = n_species * params.n_max
    return m * (m + 1) // 2 * (params.l_max + 1)


class _Expansion:
    """Cached quadrature grid and orthonormal radial basis for one params set."""

    _cache: dict[SoapParams, "_Expansion"] = {}

    def __init__(self, params: SoapParams):
        self.params = params
        nodes, weights = np.polynomial.legendre.leggauss(_N_QUAD)
        self.r = 0.5 * params.cutoff * (nodes + 1.0)
        self.w = 0.5 * params.cutoff * weights
        centers = params.cutoff * np.arange(1, params.n_max + 1) / params.n_max
        width = params.cutoff / params.n_max
        phi = np.exp(-0.5 * ((self.r[None, :] - centers[:, None]) / width) ** 2)
        overlap = (phi * self.w * self.r**2) @ phi.T
        evals, evecs = np.linalg.eigh(overlap)
        evals = np.maximum(evals, 1e-12)
        inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.T
        self.basis = inv_sqrt @ phi  # (n_max, quad)
        self.alpha = 1.0 / (2.0 * params.sigma**2)
        # Radial moments of the basis against exp(-alpha r^2) (center atom).
        self.center_integral = (self.basis * self.w * self.r**2) @ np.exp(
            -self.alpha * self.r**2
        )

    @classmethod
    def get(cls, params: SoapParams) -> "_Expansion":
        if params not in cls._cache:
            cls._cache[params] = cls(params)
        return cls._cache[params]

    def radial_integrals(self, dist: float) -> np.ndarray:
        """I[n, l] = int g_n(r) r^2 exp(-a(r^2+d^2)) i_l(2 a r d) dr, stably."""
        p = self.params
        x = 2.0 * self.alpha * self.r * dist  # strictly positive off-center
        orders = np.arange(p.l_max + 1)[:, None] + 0.5
        # exp(-a(r^2+d^2)) i_l(2ard) = sqrt(pi/2x) ive(l+1/2, x) exp(-a(r-d)^2)
        kernel = (
            np.sqrt(np.pi / (2.0 * x))
            * ive(orders, x[None, :])
            * np.exp(-self.alpha * (self.r - dist) ** 2)[None, :]
        )
        return (self.basis * self.w * self.r**2) @ kernel.T  # (n_max, l_max+1)


def _spherical_harmonics(l_max: int, unit_vecs: np.ndarray) -> np.ndarray:
    """Complex Y_lm for all neighbors: shape (n, l_max+1, 2*l_max+1).

    The m axis is offset by l_max (index l_max + m).
    """
    try:
        from scipy.special import sph_harm_y

        def ylm(l, m, theta, phi):
            return sph_harm_y(l, m, theta, phi)

    except ImportError:  # older scipy
        from scipy.special import sph_harm

        def ylm(l, m, theta, phi):
            return sph_harm(m, l, phi, theta)

    theta = np.arccos(np.clip(unit_vecs[:, 2], -1.0, 1.0))
    phi = np.arctan2(unit_vecs[:, 1], unit_vecs[:, 0])
    out = np.zeros((len(unit_vecs), l_max + 1, 2 * l_max + 1), dtype=complex)
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            out[:, l, l_max + m] = ylm(l, m, theta, phi)
    return out


def soap_descriptor(
    positions: np.ndarray,
    elements,
    atom_index: int,
    params: SoapParams,
    species_list=SPECIES,
) -> np.ndarray:
    """Power-spectrum descriptor of one atomic environment.

    ``positions`` are (n, 3) in Bohr. The descriptor is invariant to
    rotation, translation, and permutation of same-species neighbors.
    """
    positions = np.asarray(positions, dtype=float)
    n_atoms = len(positions)
    if not 0 <= atom_index < n_atoms:
        raise ValidationError(f"atom_index {atom_index} out of range for {n_atoms} atoms")
    species_index = {s: k for k, s in enumerate(species_list)}
    for el in elements:
        if el not in species_index:
            raise ValidationError(f"element {el!r} not in species list {species_list}")

    exp = _Expansion.get(params)
    p = params
    n_sp = len(species_list)
    m_total = n_sp * p.n_max
    coeff = np.zeros((m_total, p.l_max + 1, 2 * p.l_max + 1), dtype=complex)

    center = positions[atom_index]
    rel = positions - center
    dists = np.linalg.norm(rel, axis=1)
    neighbors = [
        j
        for j in range(n_atoms)
        if j != atom_index and dists[j] <= p.cutoff and dists[j] > 0.0
    ]

    # Central atom: only the l=0, m=0 channel survives angular integration.
    s_center = species_index[elements[atom_index]]
    coeff[s_center * p.n_max : (s_center + 1) * p.n_max, 0, p.l_max] += (
        np.sqrt(4.0 * np.pi) * exp.center_integral
    )

    if neighbors:
        units = rel[neighbors] / dists[neighbors][:, None]
        ylm = _spherical_harmonics(p.l_max, units)  # (nn, l, m)
        for row, j in enumerate(neighbors):
            radial = exp.radial_integrals(dists[j])  # (n_max, l+1)
            s = species_index[elements[j]]
            block = slice(s * p.n_max, (s + 1) * p.n_max)
            coeff[block] += (
                4.0
                * np.pi
                * radial[:, :, None]
                * np.conj(ylm[row])[None, :, :]
            )

    # Hermitian contraction over m; real for a real density.
    prod = np.einsum("ulm,vlm->uvl", coeff, np.conj(coeff))
    norm = np.pi * np.sqrt(8.0 / (2.0 * np.arange(p.l_max + 1) + 1.0))
    prod = prod.real * norm[None, None, :]
    iu, ju = np.triu_indices(m_total)
    return prod[iu, ju, :].ravel()


def soap_all_atoms(record, params: SoapParams, species_list=SPECIES) -> np.ndarray:
    """Descriptor matrix (n_atoms, dim) for every atom of one molecule."""
    return np.stack(
        [
            soap_descriptor(record.positions, record.elements, k, params, species_list)
            for k in range(record.n_atoms)
        ]
    )
