"""Deterministic synthetic molecules with analytic per-atom targets.

The desk-scale stand-in for the real archives: geometries are random
but physically spaced, and every target is a smooth closed-form
function of the local geometry, so a small model can learn it and
every equivariance property holds exactly. The molecular dipole in
the property block is the exact vector sum of the per-atom dipole
contributions, which makes the reconstruction identity testable
end to end.

SMILES strings are drawn from a template pool to exercise scaffold
grouping; they are deliberately decoupled from the random geometry.
"""

from __future__ import annotations

import numpy as np

from .constants import AU_DIPOLE_TO_DEBYE, SPECIES
from .dataset import AtomTargets, Dataset, DatasetEntry, MoleculeRecord
from .geometry import gyration_tensor

__all__ = ["make_synthetic_dataset", "synthetic_molecule", "SMILES_TEMPLATES"]

_BASE_POPULATION = {"H": 0.95, "C": 5.9, "N": 7.1, "O": 9.1}
_SPECIES_PULL = {"H": 0.1, "C": 0.3, "N": 0.4, "O": 0.5}
_SPECIES_QUAD = {"H": 0.5, "C": 1.0, "N": 1.2, "O": 1.5}
_ALPHA_TERM = {"H": 3.0, "C": 11.0, "N": 9.0, "O": 7.0}
_U0_TERM = {"H": 0.6, "C": 38.0, "N": 54.0, "O": 75.0}
_CV_TERM = {"H": 2.0, "C": 3.5, "N": 3.8, "O": 4.1}

SMILES_TEMPLATES = [
    "CCO", "CCC", "CCN", "CC=O", "C#N", "CC(C)C", "CCCC", "OCC(O)CO",
    "CC(=O)NC=N", "CN(C)C=O", "N#CC#N", "CC(=O)OC", "CCCCC", "NCCO",
    "c1ccccc1", "Cc1ccccc1", "c1ccncc1", "c1ccoc1", "C1CC1", "C1CCC1",
    "C1CCCC1", "C1CCCCC1", "OC1CCCC1", "NC1CC1", "C1CC1C1CC1",
    "c1cc2ccccc2cc1", "O1CCOCC1", "N1C=CC=C1", "C1CC2CCC1CC2", "OC1CCCCC1",
    "CC1(C)CC1", "c1ccccc1CC", "c1ccccc1O", "c1ccccc1N", "C1=CC1",
    "CC(C)(C)C", "OCC=O", "NC(=O)C", "CC(O)C", "COC",
]


def _smooth(r):
    return np.exp(-((r / 2.5) ** 2))


def _analytic_targets(elements, positions):
    n = len(elements)
    targets = []
    for i in range(n):
        coord = 0.0
        pull = 0.0
        mu = np.zeros(3)
        quad = np.zeros(5)
        for j in range(n):
            if j == i:
                continue
            vec = positions[j] - positions[i]
            r = float(np.linalg.norm(vec))
            unit = vec / r
            w = _smooth(r)
            coord += w
            pull += w * _SPECIES_PULL[elements[j]]
            mu += 0.3 * w * (_SPECIES_PULL[elements[j]] - _SPECIES_PULL[elements[i]]) * unit
            quad += 0.2 * w * _SPECIES_QUAD[elements[j]] * gyration_tensor(unit)
        n_e = _BASE_POPULATION[elements[i]] + 0.6 * pull
        li = n_e * (0.45 + 0.3 * np.exp(-coord))
        targets.append(AtomTargets(n_e=n_e, li=li, mu=mu, quad=quad))
    return targets


def _molecular_props(elements, positions, targets):
    n = len(elements)
    coords = []
    for i in range(n):
        c = sum(
            _smooth(float(np.linalg.norm(positions[j] - positions[i])))
            for j in range(n)
            if j != i
        )
        coords.append(c)
    total_coord = float(np.sum(coords))
    dipole = np.sum([t.mu for t in targets], axis=0)
    return {
        "alpha": sum(_ALPHA_TERM[e] for e in elements) + 0.5 * total_coord,
        "gap": 0.3 + 0.05 * total_coord / n,
        "u0": -sum(_U0_TERM[e] for e in elements) - 0.1 * total_coord,
        "cv": sum(_CV_TERM[e] for e in elements) + 0.2 * total_coord,
        "mu": float(np.linalg.norm(dipole)) * AU_DIPOLE_TO_DEBYE,
    }


def synthetic_molecule(mol_id: str, rng: np.random.Generator, n_atoms=None):
    """One random molecule with analytic targets and properties."""
    if n_atoms is None:
        n_atoms = int(rng.integers(4, 10))
    elements = [SPECIES[k] for k in rng.choice(4, size=n_atoms, p=[0.4, 0.35, 0.13, 0.12])]
    positions = np.zeros((n_atoms, 3))
    for i in range(1, n_atoms):
        for _attempt in range(200):
            anchor = positions[rng.integers(0, i)]
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            candidate = anchor + direction * rng.uniform(2.0, 3.4)
            if np.linalg.norm(positions[:i] - candidate, axis=1).min() > 1.7:
                positions[i] = candidate
                break
        else:
            positions[i] = anchor + direction * 3.4
    targets = _analytic_targets(elements, positions)
    props = _molecular_props(elements, positions, targets)
    smiles = SMILES_TEMPLATES[int(rng.integers(0, len(SMILES_TEMPLATES)))]
    record = MoleculeRecord(
        id=mol_id, elements=elements, positions=positions, smiles=smiles, qm9_props=props
    )
    return record, targets


def make_synthetic_dataset(n_molecules: int = 50, seed: int = 7) -> Dataset:
    rng = np.random.default_rng(seed)
    entries = []
    for k in range(n_molecules):
        record, targets = synthetic_molecule(f"syn_{k:04d}", rng)
        entries.append(DatasetEntry(record=record, targets=targets))
    return Dataset(entries)
