"""Scaffold extraction and the repeated grouped cross-validation plan.

Scaffolds are computed by iteratively pruning terminal (degree-1)
atoms; what remains (ring systems plus linkers) is canonicalized with
iterative neighborhood refinement into a stable hash key. Acyclic
molecules collapse to the single key ``ACYCLIC`` by default, so they
always travel together through splits; ``acyclic_per_molecule=True``
gives each its own group instead.

The plan is five independent repeats of a grouped 5-fold split over
the training pool, with one fixed holdout shared by all 25 cells.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .smiles import MolGraph

__all__ = [
    "ACYCLIC",
    "murcko_scaffold",
    "grouped_kfold",
    "FoldPlan",
    "build_plan",
    "write_plan",
    "read_plan",
]

ACYCLIC = "ACYCLIC"


def murcko_scaffold(graph: MolGraph) -> str:
    """Canonical scaffold key of a molecular graph.

    Degree-1 atoms are pruned to a fixed point; the remaining graph is
    hashed by several rounds of neighborhood refinement over (element,
    aromatic) node colors and bond orders. Acyclic molecules return
    the distinguished ACYCLIC key.
    """
    alive = set(range(graph.n_atoms))
    bonds = [(b.i, b.j, b.order, b.aromatic) for b in graph.bonds]
    while True:
        degree = {a: 0 for a in alive}
        for i, j, _, _ in bonds:
            if i in alive and j in alive:
                degree[i] += 1
                degree[j] += 1
        terminal = {a for a in alive if degree[a] <= 1}
        if not terminal:
            break
        alive -= terminal
        if not alive:
            return ACYCLIC
        bonds = [b for b in bonds if b[0] in alive and b[1] in alive]
    return _canonical_key(graph, alive, bonds)


def _canonical_key(graph: MolGraph, alive, bonds) -> str:
    order = sorted(alive)
    index = {a: k for k, a in enumerate(order)}
    colors = [
        f"{graph.atoms[a].element}:{int(graph.atoms[a].aromatic)}" for a in order
    ]
    adj = [[] for _ in order]
    for i, j, bond_order, aromatic in bonds:
        tag = "a" if aromatic else str(bond_order)
        adj[index[i]].append((index[j], tag))
        adj[index[j]].append((index[i], tag))

    for _ in range(max(1, len(order))):
        new_colors = []
        for k in range(len(order)):
            neighborhood = sorted(f"{tag}|{colors[nb]}" for nb, tag in adj[k])
            payload = colors[k] + "#" + ";".join(neighborhood)
            new_colors.append(hashlib.sha256(payload.encode()).hexdigest()[:16])
        if sorted(new_colors) == sorted(colors):
            break
        colors = new_colors
    digest = hashlib.sha256(",".join(sorted(colors)).encode()).hexdigest()[:24]
    return f"S{digest}"


def grouped_kfold(groups: dict[str, str], k: int, seed: int) -> list[list[str]]:
    """Split IDs into k folds without splitting any group.

    Balancing is greedy largest-group-first into the currently
    smallest fold; same-size groups are ordered by a seeded shuffle,
    so the plan is deterministic under (groups, k, seed).
    """
    if k < 2:
        raise ValidationError("k must be >= 2")
    by_key: dict[str, list[str]] = {}
    for mol_id in sorted(groups):
        by_key.setdefault(groups[mol_id], []).append(mol_id)
    if len(by_key) < k:
        raise ValidationError(f"need at least k={k} distinct groups, have {len(by_key)}")

    group_list = sorted(by_key.items())
    rng = random.Random(seed)
    rng.shuffle(group_list)
    group_list.sort(key=lambda kv: -len(kv[1]))  # stable: ties keep shuffle order

    folds: list[list[str]] = [[] for _ in range(k)]
    sizes = [0] * k
    for _key, ids in group_list:
        target = min(range(k), key=lambda f: (sizes[f], f))
        folds[target].extend(ids)
        sizes[target] += len(ids)
    return [sorted(f) for f in folds]


@dataclass
class FoldPlan:
    """Assignment of the 5x5 protocol: 25 cells plus the fixed holdout."""

    repeats: int
    folds: int
    seeds: list[int]
    holdout_ids: list[str]
    assignment: dict[tuple[int, int], dict[str, list[str]]] = field(default_factory=dict)

    def cell(self, repeat: int, fold: int) -> dict[str, list[str]]:
        return self.assignment[(repeat, fold)]

    def cells(self):
        for r in range(self.repeats):
            for f in range(self.folds):
                yield (r, f), self.assignment[(r, f)]


def build_plan(
    groups: dict[str, str],
    holdout_ids,
    seeds,
    n_folds: int = 5,
) -> FoldPlan:
    """Build the repeated grouped-CV plan over the training pool.

    ``groups`` maps train-pool molecule IDs to scaffold keys; the
    holdout must be disjoint from the pool and is shared by all cells.
    One repeat per seed.
    """
    holdout_ids = sorted(holdout_ids)
    pool = set(groups)
    if not pool:
        raise ValidationError("empty training pool")
    overlap = pool & set(holdout_ids)
    if overlap:
        raise ValidationError(f"holdout overlaps the training pool: {sorted(overlap)[:3]}")

    plan = FoldPlan(
        repeats=len(seeds),
        folds=n_folds,
        seeds=list(seeds),
        holdout_ids=holdout_ids,
    )
    for r, seed in enumerate(seeds):
        folds = grouped_kfold(groups, n_folds, seed)
        for f in range(n_folds):
            train = sorted(m for g in range(n_folds) if g != f for m in folds[g])
            plan.assignment[(r, f)] = {"train": train, "val": list(folds[f])}
    return plan


def write_plan(plan: FoldPlan, path) -> None:
    obj = {
        "repeats": plan.repeats,
        "folds": plan.folds,
        "seeds": plan.seeds,
        "holdout": plan.holdout_ids,
        "cells": {
            f"{r},{f}": cell for (r, f), cell in sorted(plan.assignment.items())
        },
    }
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True), encoding="utf-8")


def read_plan(path) -> FoldPlan:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    plan = FoldPlan(
        repeats=obj["repeats"],
        folds=obj["folds"],
        seeds=obj["seeds"],
        holdout_ids=obj["holdout"],
    )
    for key, cell in obj["cells"].items():
        r, f = key.split(",")
        plan.assignment[(int(r), int(f))] = {"train": cell["train"], "val": cell["val"]}
    return plan
