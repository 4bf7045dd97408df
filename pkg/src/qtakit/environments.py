"""Element-scoped atomic-environment labeling and the OOD holdout.

Atoms are described with SOAP, reduced per element with PCA, and
clustered per element with the hierarchical density clusterer. Labels
are element-scoped: H_10 and C_10 are distinct environments. The
holdout is the set of molecules containing at least one held label;
by construction no training molecule may contain any held label.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import NOISE, ClusterParams, hdbscan_cluster
from .constants import SPECIES
from .dataset import Dataset
from .errors import ParseError, ValidationError
from .pca import pca_fit, pca_transform
from .soap import SoapParams, soap_descriptor

__all__ = [
    "EnvLabel",
    "ElementParams",
    "label_atoms",
    "cooccurrence",
    "build_holdout",
    "write_labels",
    "read_labels",
    "molecule_label_sets",
]


@dataclass(frozen=True, order=True)
class EnvLabel:
    """Element-scoped environment label; cluster = -1 means noise."""

    element: str
    cluster: int

    def __str__(self):
        return f"{self.element}_{self.cluster}" if self.cluster != NOISE else f"{self.element}_noise"

    @classmethod
    def parse(cls, text: str) -> "EnvLabel":
        element, _, tail = text.partition("_")
        if element not in SPECIES:
            raise ValidationError(f"bad environment label {text!r}")
        if tail == "noise":
            return cls(element, NOISE)
        return cls(element, int(tail))

    @property
    def is_noise(self) -> bool:
        return self.cluster == NOISE


@dataclass(frozen=True)
class ElementParams:
    """Per-element descriptor/reduction/clustering settings."""

    soap: SoapParams
    cluster: ClusterParams
    pca_components: int | None = None
    variance_target: float = 0.99


def label_atoms(dataset: Dataset, params_by_element: dict[str, ElementParams]):
    """Label every atom in the dataset.

    Returns (labels, report): ``labels`` maps (molecule_id, atom_index)
    to an EnvLabel; ``report`` carries per-element atom counts, PCA
    size, variance retained, cluster count, and noise fraction.
    Deterministic for a fixed dataset order.
    """
    atoms_by_element: dict[str, list[tuple[str, int]]] = defaultdict(list)
    for entry in dataset:
        for k, el in enumerate(entry.record.elements):
            atoms_by_element[el].append((entry.record.id, k))

    labels: dict[tuple[str, int], EnvLabel] = {}
    report: dict[str, dict] = {}
    for element in sorted(atoms_by_element):
        if element not in params_by_element:
            raise ValidationError(f"no parameters configured for element {element}")
        ep = params_by_element[element]
        keys = atoms_by_element[element]
        rows = np.stack(
            [
                soap_descriptor(
                    dataset[mol_id].record.positions,
                    dataset[mol_id].record.elements,
                    idx,
                    ep.soap,
                )
                for mol_id, idx in keys
            ]
        )
        if len(rows) >= 2:
            model = pca_fit(rows, ep.variance_target, n_components=ep.pca_components)
            reduced = pca_transform(model, rows)
            k_pca, retained = model.k, model.explained_ratio
        else:
            reduced, k_pca, retained = rows, rows.shape[1], 1.0
        cluster_ids = hdbscan_cluster(reduced, ep.cluster)
        for key, cid in zip(keys, cluster_ids):
            labels[key] = EnvLabel(element, int(cid))
        n_clusters = len(set(int(c) for c in cluster_ids if c != NOISE))
        noise_frac = float(np.mean(cluster_ids == NOISE)) if len(cluster_ids) else 0.0
        report[element] = {
            "n_atoms": len(keys),
            "pca_components": int(k_pca),
            "variance_retained": float(retained),
            "n_clusters": n_clusters,
            "noise_fraction": noise_frac,
        }
    return labels, report


def molecule_label_sets(labels: dict[tuple[str, int], EnvLabel]) -> dict[str, set[EnvLabel]]:
    """Group atom labels into per-molecule sets (noise labels included)."""
    out: dict[str, set[EnvLabel]] = defaultdict(set)
    for (mol_id, _idx), label in labels.items():
        out[mol_id].add(label)
    return dict(out)


def cooccurrence(labels: dict[tuple[str, int], EnvLabel], universe=None):
    """Conditional co-occurrence over molecules.

    Returns (label list, matrix M, flagged) with
    M[a, b] = P(label b present in a molecule | label a present).
    Noise labels are excluded. When ``universe`` pins the label list,
    labels with zero support yield a zero row and are flagged.
    """
    per_mol = molecule_label_sets(labels)
    if universe is not None:
        all_labels = sorted(universe)
    else:
        all_labels = sorted({l for s in per_mol.values() for l in s if not l.is_noise})
    index = {l: i for i, l in enumerate(all_labels)}
    counts = np.zeros((len(all_labels), len(all_labels)))
    support = np.zeros(len(all_labels))
    for mol_labels in per_mol.values():
        present = [index[l] for l in mol_labels if not l.is_noise and l in index]
        for a in present:
            support[a] += 1
            for b in present:
                counts[a, b] += 1
    flagged = [all_labels[i] for i in np.where(support == 0)[0]]
    with np.errstate(invalid="ignore"):
        matrix = np.where(support[:, None] > 0, counts / np.maximum(support[:, None], 1), 0.0)
    return all_labels, matrix, flagged


def build_holdout(
    dataset: Dataset,
    labels: dict[tuple[str, int], EnvLabel],
    held: set[EnvLabel],
):
    """Split molecule IDs into (train_pool, holdout) by held labels.

    A molecule goes to the holdout iff it contains at least one atom
    whose label is in ``held``. Raises if a held label never occurs.
    The leakage guarantee (no train molecule carries a held label) is
    asserted exhaustively before returning.
    """
    per_mol = molecule_label_sets(labels)
    occurrence = {h: 0 for h in held}
    holdout, train_pool = [], []
    for entry in dataset:
        mol_labels = per_mol.get(entry.record.id, set())
        hit = mol_labels & held
        for h in hit:
            occurrence[h] += 1
        (holdout if hit else train_pool).append(entry.record.id)
    unsupported = [str(h) for h, c in occurrence.items() if c == 0]
    if unsupported:
        raise ValidationError(
            f"held labels with zero support: {', '.join(sorted(unsupported))}"
        )
    for mol_id in train_pool:
        leaked = per_mol.get(mol_id, set()) & held
        if leaked:
            raise ValidationError(f"leakage: train molecule {mol_id} carries {leaked}")
    return train_pool, holdout


def write_labels(labels: dict[tuple[str, int], EnvLabel], path) -> None:
    """Text format: `molecule_id atom_index element cluster`, noise as -1."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for (mol_id, idx), label in sorted(labels.items()):
            fh.write(f"{mol_id} {idx} {label.element} {label.cluster}\n")


def read_labels(path) -> dict[tuple[str, int], EnvLabel]:
    labels = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ParseError("expected `molecule_id atom_index element cluster`", line=lineno)
        mol_id, idx, element, cluster = fields
        try:
            labels[(mol_id, int(idx))] = EnvLabel(element, int(cluster))
        except ValueError:
            raise ParseError(f"malformed labels row {line!r}", line=lineno) from None
    return labels
