"""Directed molecular graphs for the message-passing regressor.

Edges are (receiver, sender) pairs; the per-edge unit vector points
from receiver to sender and carries its unit-norm gyration tensor.
With a cutoff, each receiver keeps up to ``max_nn`` nearest senders
inside the cutoff (ties broken by atom index); both directions are
selected independently, so in-degree is bounded but the edge set need
not be symmetric. Without a cutoff the graph is fully connected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import SPECIES_INDEX
from .errors import ValidationError
from .geometry import gyration_tensors

__all__ = ["GraphInstance", "build_graph", "pack_graphs", "rotate_graph"]


@dataclass
class GraphInstance:
    species: np.ndarray  # (n,) int, index into SPECIES
    positions: np.ndarray  # (n, 3) Bohr
    receivers: np.ndarray  # (E,) int
    senders: np.ndarray  # (E,) int
    unit_vecs: np.ndarray  # (E, 3), receiver -> sender direction
    lengths: np.ndarray  # (E,)
    gyrations: np.ndarray  # (E, 5)
    mol_index: np.ndarray  # (n,) molecule id per atom (for pooling)
    n_molecules: int = 1

    @property
    def n_atoms(self) -> int:
        return len(self.species)

    @property
    def n_edges(self) -> int:
        return len(self.receivers)


def build_graph(record, cutoff: float | None, max_nn: int | None) -> GraphInstance:
    """Construct the directed graph of one molecule.

    Cutoff graphs on a single atom are degenerate (no possible edge)
    and rejected; nodes with fewer than 2 neighbors trigger a warning
    since downstream geometry filters see too little context.
    """
    pos = np.asarray(record.positions, dtype=float)
    n = len(pos)
    species = np.array([SPECIES_INDEX[el] for el in record.elements], dtype=np.intp)
    if cutoff is not None and n < 2:
        raise ValidationError(
            f"molecule {record.id!r}: single-atom molecule has no edges under a cutoff"
        )

    diff = pos[None, :, :] - pos[:, None, :]  # diff[i, j] = pos_j - pos_i
    dist = np.sqrt((diff**2).sum(axis=2))
    receivers, senders = [], []
    few_neighbors = []
    for i in range(n):
        order = sorted((dist[i, j], j) for j in range(n) if j != i)
        if cutoff is not None:
            order = [(d, j) for d, j in order if d <= cutoff]
        if max_nn is not None:
            order = order[:max_nn]
        if len(order) < 2:
            few_neighbors.append(i)
        for _, j in order:
            receivers.append(i)
            senders.append(j)
    if few_neighbors and n > 1:
        warnings.warn(
            f"molecule {record.id!r}: atoms {few_neighbors} have fewer than "
            "2 neighbors within the cutoff",
            stacklevel=2,
        )

    receivers = np.asarray(receivers, dtype=np.intp)
    senders = np.asarray(senders, dtype=np.intp)
    vecs = pos[senders] - pos[receivers]
    lengths = np.linalg.norm(vecs, axis=1) if len(vecs) else np.empty(0)
    units = vecs / lengths[:, None] if len(vecs) else np.empty((0, 3))
    gyr = gyration_tensors(units) if len(units) else np.empty((0, 5))
    return GraphInstance(
        species=species,
        positions=pos,
        receivers=receivers,
        senders=senders,
        unit_vecs=units,
        lengths=lengths,
        gyrations=gyr,
        mol_index=np.zeros(n, dtype=np.intp),
        n_molecules=1,
    )


def pack_graphs(graphs: list[GraphInstance]) -> GraphInstance:
    """Concatenate molecules into one batched graph with offset indices."""
    if not graphs:
        raise ValidationError("cannot pack an empty graph list")
    species, positions, recv, send = [], [], [], []
    units, lengths, gyr, mol_idx = [], [], [], []
    atom_offset = 0
    for m, g in enumerate(graphs):
        species.append(g.species)
        positions.append(g.positions)
        recv.append(g.receivers + atom_offset)
        send.append(g.senders + atom_offset)
        units.append(g.unit_vecs)
        lengths.append(g.lengths)
        gyr.append(g.gyrations)
        mol_idx.append(np.full(g.n_atoms, m, dtype=np.intp))
        atom_offset += g.n_atoms
    return GraphInstance(
        species=np.concatenate(species),
        positions=np.concatenate(positions),
        receivers=np.concatenate(recv),
        senders=np.concatenate(send),
        unit_vecs=np.concatenate(units),
        lengths=np.concatenate(lengths),
        gyrations=np.concatenate(gyr),
        mol_index=np.concatenate(mol_idx),
        n_molecules=len(graphs),
    )


def rotate_graph(graph: GraphInstance, rot: np.ndarray) -> GraphInstance:
    """Rigidly rotate a graph; distances and topology are unchanged."""
    units = graph.unit_vecs @ rot.T
    return GraphInstance(
        species=graph.species,
        positions=graph.positions @ rot.T,
        receivers=graph.receivers,
        senders=graph.senders,
        unit_vecs=units,
        lengths=graph.lengths,
        gyrations=gyration_tensors(units) if len(units) else graph.gyrations,
        mol_index=graph.mol_index,
        n_molecules=graph.n_molecules,
    )
