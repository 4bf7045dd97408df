"""A SMILES subset parser producing hydrogen-implicit molecular graphs.

Supported grammar: organic-subset atoms H, C, N, O (aromatic c, n, o),
bond symbols - = #, parenthesised branches, ring closures as single
digits or %nn. Bracket atoms, stereo markers, charges, dots and any
other element fail loudly with the offending position, since silently
skipped molecules would bias scaffold grouping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError

__all__ = ["MolGraph", "GraphAtom", "GraphBond", "parse_smiles"]

_PLAIN_ATOMS = {"H", "C", "N", "O"}
_AROMATIC_ATOMS = {"c", "n", "o"}
_BOND_ORDERS = {"-": 1, "=": 2, "#": 3}


@dataclass
class GraphAtom:
    element: str
    aromatic: bool = False
    charge: int = 0


@dataclass
class GraphBond:
    i: int
    j: int
    order: int
    aromatic: bool = False


@dataclass
class MolGraph:
    """Heavy-atom graph with ring membership computed at construction."""

    atoms: list[GraphAtom] = field(default_factory=list)
    bonds: list[GraphBond] = field(default_factory=list)
    ring_atoms: list[bool] = field(default_factory=list)
    ring_bonds: list[bool] = field(default_factory=list)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def n_rings(self) -> int:
        """Cyclomatic ring count: bonds - atoms + connected components."""
        return len(self.bonds) - len(self.atoms) + self.n_components()

    def n_components(self) -> int:
        seen = [False] * len(self.atoms)
        adj = self.adjacency()
        count = 0
        for start in range(len(self.atoms)):
            if seen[start]:
                continue
            count += 1
            stack = [start]
            seen[start] = True
            while stack:
                a = stack.pop()
                for b, _ in adj[a]:
                    if not seen[b]:
                        seen[b] = True
                        stack.append(b)
        return count

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per-atom list of (neighbor, bond index)."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for bi, b in enumerate(self.bonds):
            adj[b.i].append((b.j, bi))
            adj[b.j].append((b.i, bi))
        return adj


def parse_smiles(s: str) -> MolGraph:
    """Parse a SMILES string into a MolGraph.

    Implicit hydrogens are not materialized. Raises ParseError with a
    1-based character position on any unsupported or malformed token.
    """
    if not s:
        raise ParseError("empty SMILES string", column=1)
    atoms: list[GraphAtom] = []
    bonds: list[GraphBond] = []
    bond_keys: set[tuple[int, int]] = set()
    branch_stack: list[int] = []
    # ring number -> (atom index, explicit bond order or None, position)
    open_rings: dict[int, tuple[int, int | None, int]] = {}
    prev_atom: int | None = None
    pending_order: int | None = None
    pending_pos = 0

    def add_bond(i: int, j: int, order: int | None, pos: int) -> None:
        if i == j:
            raise ParseError("ring closure bonds an atom to itself", column=pos)
        key = (min(i, j), max(i, j))
        if key in bond_keys:
            raise ParseError("duplicate bond between the same atoms", column=pos)
        bond_keys.add(key)
        both_aromatic = atoms[i].aromatic and atoms[j].aromatic
        if order is None:
            bonds.append(GraphBond(i, j, 1, aromatic=both_aromatic))
        else:
            bonds.append(GraphBond(i, j, order))

    pos = 0
    n = len(s)
    while pos < n:
        ch = s[pos]
        col = pos + 1
        if ch in _PLAIN_ATOMS or ch in _AROMATIC_ATOMS:
            atoms.append(GraphAtom(ch.upper(), aromatic=ch in _AROMATIC_ATOMS))
            idx = len(atoms) - 1
            if prev_atom is not None:
                add_bond(prev_atom, idx, pending_order, col)
            elif pending_order is not None:
                raise ParseError("bond symbol with no preceding atom", column=pending_pos)
            pending_order = None
            prev_atom = idx
            pos += 1
        elif ch in _BOND_ORDERS:
            if pending_order is not None:
                raise ParseError("two consecutive bond symbols", column=col)
            pending_order = _BOND_ORDERS[ch]
            pending_pos = col
            pos += 1
        elif ch == "(":
            if prev_atom is None:
                raise ParseError("branch opened before any atom", column=col)
            branch_stack.append(prev_atom)
            pos += 1
        elif ch == ")":
            if not branch_stack:
                raise ParseError("unbalanced ')'", column=col)
            if pending_order is not None:
                raise ParseError("dangling bond symbol before ')'", column=col)
            prev_atom = branch_stack.pop()
            pos += 1
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                if pos + 2 >= n or not s[pos + 1 : pos + 3].isdigit():
                    raise ParseError("'%' must be followed by two digits", column=col)
                ring_id = int(s[pos + 1 : pos + 3])
                pos += 3
            else:
                ring_id = int(ch)
                pos += 1
            if prev_atom is None:
                raise ParseError("ring closure digit before any atom", column=col)
            if ring_id in open_rings:
                other, open_order, _ = open_rings.pop(ring_id)
                order = pending_order if pending_order is not None else open_order
                if (
                    pending_order is not None
                    and open_order is not None
                    and pending_order != open_order
                ):
                    raise ParseError("conflicting ring bond orders", column=col)
                add_bond(other, prev_atom, order, col)
                pending_order = None
            else:
                open_rings[ring_id] = (prev_atom, pending_order, col)
                pending_order = None
        elif ch == "[":
            raise ParseError("bracket atoms are not supported", column=col)
        elif ch in "/\\":
            raise ParseError("stereo bonds are not supported", column=col)
        elif ch == ".":
            raise ParseError("disconnected structures ('.') are not supported", column=col)
        else:
            raise ParseError(f"unsupported SMILES token {ch!r}", column=col)

    if branch_stack:
        raise ParseError("unbalanced '(': branch never closed", column=n)
    if open_rings:
        ring_id, (_, _, col) = next(iter(open_rings.items()))
        raise ParseError(f"dangling ring closure {ring_id}", column=col)
    if pending_order is not None:
        raise ParseError("trailing bond symbol", column=pending_pos)

    graph = MolGraph(atoms=atoms, bonds=bonds)
    graph.ring_atoms, graph.ring_bonds = _ring_membership(graph)
    return graph


def _ring_membership(graph: MolGraph) -> tuple[list[bool], list[bool]]:
    """A bond is in a ring iff it is not a bridge (Tarjan low-link)."""
    n = len(graph.atoms)
    adj = graph.adjacency()
    disc = [-1] * n
    low = [0] * n
    is_bridge = [False] * len(graph.bonds)
    timer = 0

    for root in range(n):
        if disc[root] != -1:
            continue
        # Iterative DFS carrying the bond used to enter each node.
        stack = [(root, -1, iter(adj[root]))]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            node, in_bond, it = stack[-1]
            advanced = False
            for nb, bi in it:
                if bi == in_bond:
                    continue
                if disc[nb] == -1:
                    disc[nb] = low[nb] = timer
                    timer += 1
                    stack.append((nb, bi, iter(adj[nb])))
                    advanced = True
                    break
                low[node] = min(low[node], disc[nb])
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        is_bridge[in_bond] = True

    ring_bonds = [not b for b in is_bridge]
    ring_atoms = [False] * n
    for bi, bond in enumerate(graph.bonds):
        if ring_bonds[bi]:
            ring_atoms[bond.i] = True
            ring_atoms[bond.j] = True
    return ring_atoms, ring_bonds
