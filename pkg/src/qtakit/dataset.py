"""Canonical dataset records and their line-delimited on-disk format.

A dataset file is UTF-8 JSON lines: one header record carrying the
schema version and units, then one molecule record per line with a
fixed field order. Floats are written with Python's shortest
round-trip repr, so parse -> serialize -> parse is bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import SPECIES
from .errors import ParseError, ValidationError

__all__ = [
    "MoleculeRecord",
    "AtomTargets",
    "DatasetEntry",
    "Dataset",
    "assemble_dataset",
    "write_dataset",
    "read_dataset",
    "read_exclusions",
]

SCHEMA_NAME = "qtakit.dataset"
SCHEMA_VERSION = 1
UNITS = {"positions": "bohr", "mu": "e*bohr", "quad": "e*bohr^2"}


@dataclass
class MoleculeRecord:
    """Geometry plus molecular metadata; positions are (n, 3) in Bohr."""

    id: str
    elements: list[str]
    positions: np.ndarray
    smiles: str = ""
    qm9_props: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if len(self.elements) == 0:
            raise ValidationError(f"molecule {self.id!r} has no atoms")
        if self.positions.shape != (len(self.elements), 3):
            raise ValidationError(
                f"molecule {self.id!r}: {len(self.elements)} elements vs "
                f"positions of shape {self.positions.shape}"
            )
        if not np.all(np.isfinite(self.positions)):
            raise ValidationError(f"molecule {self.id!r} has non-finite coordinates")
        for el in self.elements:
            if el not in SPECIES:
                raise ValidationError(f"molecule {self.id!r}: unsupported element {el!r}")

    @property
    def n_atoms(self) -> int:
        return len(self.elements)


@dataclass
class AtomTargets:
    """Per-atom ground truth: population, localization, dipole, quadrupole."""

    n_e: float
    li: float
    mu: np.ndarray
    quad: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.quad = np.asarray(self.quad, dtype=float)
        if self.mu.shape != (3,):
            raise ValidationError(f"mu must be a 3-vector, got shape {self.mu.shape}")
        if self.quad.shape != (5,):
            raise ValidationError(f"quad must be a 5-vector, got shape {self.quad.shape}")
        vals = [self.n_e, self.li, *self.mu, *self.quad]
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("non-finite atomic target value")

    def check_population(self, strict: bool = True) -> str | None:
        """Enforce 0 < li <= n_e; returns a message when downgraded."""
        if self.n_e <= 0 or self.li <= 0 or self.li > self.n_e + 1e-12:
            msg = f"population invariant violated: n_e={self.n_e}, li={self.li}"
            if strict:
                raise ValidationError(msg)
            return msg
        return None


@dataclass
class DatasetEntry:
    record: MoleculeRecord
    targets: list[AtomTargets] | None = None

    def __post_init__(self):
        if self.targets is not None and len(self.targets) != self.record.n_atoms:
            raise ValidationError(
                f"molecule {self.record.id!r}: {self.record.n_atoms} atoms but "
                f"{len(self.targets)} target rows"
            )


class Dataset:
    """Ordered collection of molecules, addressable by ID."""

    def __init__(self, entries: list[DatasetEntry]):
        self.entries = list(entries)
        self._by_id = {}
        for e in self.entries:
            if e.record.id in self._by_id:
                raise ValidationError(f"duplicate molecule ID {e.record.id!r}")
            self._by_id[e.record.id] = e

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, mol_id: str) -> DatasetEntry:
        return self._by_id[mol_id]

    def __contains__(self, mol_id: str) -> bool:
        return mol_id in self._by_id

    @property
    def ids(self) -> list[str]:
        return [e.record.id for e in self.entries]

    def with_targets(self) -> "Dataset":
        return Dataset([e for e in self.entries if e.targets is not None])

    def subset(self, ids) -> "Dataset":
        return Dataset([self._by_id[i] for i in ids])


def assemble_dataset(
    records,
    targets_by_id=None,
    exclusions=(),
    required_props=("alpha", "gap", "u0", "cv"),
    strict_population=True,
):
    """Join molecule records with atomic targets and apply filtering.

    Molecules on the exclusion list or with missing required molecular
    properties are dropped (and counted in the report). Atom-count
    mismatches between geometry and targets are hard errors, as are
    duplicate IDs.

    Returns (Dataset, report dict).
    """
    targets_by_id = targets_by_id or {}
    excluded = set(exclusions)
    entries = []
    report = {
        "input": 0,
        "excluded": 0,
        "missing_props": 0,
        "population_warnings": [],
        "retained": 0,
    }
    seen = set()
    for rec in records:
        report["input"] += 1
        if rec.id in seen:
            raise ValidationError(f"duplicate molecule ID {rec.id!r}")
        seen.add(rec.id)
        if rec.id in excluded:
            report["excluded"] += 1
            continue
        if any(p not in rec.qm9_props for p in required_props):
            report["missing_props"] += 1
            continue
        targets = targets_by_id.get(rec.id)
        if targets is not None:
            if len(targets) != rec.n_atoms:
                raise ValidationError(
                    f"molecule {rec.id!r}: geometry has {rec.n_atoms} atoms but "
                    f"targets file has {len(targets)}"
                )
            for k, t in enumerate(targets):
                msg = t.check_population(strict=strict_population)
                if msg:
                    report["population_warnings"].append(f"{rec.id}[{k}]: {msg}")
        entries.append(DatasetEntry(record=rec, targets=targets))
    report["retained"] = len(entries)
    return Dataset(entries), report


# ---- canonical file format -------------------------------------------


def _entry_to_obj(entry: DatasetEntry) -> dict:
    rec = entry.record
    obj = {
        "id": rec.id,
        "elements": list(rec.elements),
        "positions": [[float(v) for v in row] for row in rec.positions],
        "smiles": rec.smiles,
        "props": {k: float(v) for k, v in sorted(rec.qm9_props.items())},
    }
    if entry.targets is None:
        obj["atoms"] = None
    else:
        obj["atoms"] = [
            {
                "n_e": float(t.n_e),
                "li": float(t.li),
                "mu": [float(v) for v in t.mu],
                "quad": [float(v) for v in t.quad],
            }
            for t in entry.targets
        ]
    return obj


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {"schema": SCHEMA_NAME, "version": SCHEMA_VERSION, "units": UNITS}
        fh.write(json.dumps(header) + "\n")
        for entry in dataset:
            fh.write(json.dumps(_entry_to_obj(entry)) + "\n")


def read_dataset(path) -> Dataset:
    path = Path(path)
    entries = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON record: {e.msg}", line=lineno) from e
            if lineno == 1:
                if obj.get("schema") != SCHEMA_NAME:
                    raise ParseError(
                        f"not a {SCHEMA_NAME} file (schema={obj.get('schema')!r})", line=1
                    )
                if obj.get("version") != SCHEMA_VERSION:
                    raise ParseError(f"unsupported schema version {obj.get('version')!r}", line=1)
                continue
            try:
                rec = MoleculeRecord(
                    id=obj["id"],
                    elements=obj["elements"],
                    positions=np.array(obj["positions"], dtype=float),
                    smiles=obj.get("smiles", ""),
                    qm9_props=obj.get("props", {}),
                )
                atoms = obj.get("atoms")
                targets = None
                if atoms is not None:
                    targets = [
                        AtomTargets(n_e=a["n_e"], li=a["li"], mu=a["mu"], quad=a["quad"])
                        for a in atoms
                    ]
            except (KeyError, ValidationError) as e:
                raise ParseError(f"bad molecule record: {e}", line=lineno) from e
            entries.append(DatasetEntry(record=rec, targets=targets))
    if not entries:
        raise ParseError("dataset file contains no molecule records", line=1)
    return Dataset(entries)


def read_exclusions(path) -> set[str]:
    """Plain-text exclusion list: one molecule ID per line."""
    out = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(line)
    return out
