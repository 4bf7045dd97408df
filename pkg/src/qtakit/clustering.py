"""Hierarchical density-based clustering with excess-of-mass selection.

Pipeline: mutual-reachability distances (core distance = distance to
the ``min_samples``-th nearest other point) -> minimum spanning tree
-> single-linkage hierarchy -> condensed tree at ``min_cluster_size``
-> stability-based (excess-of-mass) cluster selection with no merging.
Points outside every selected cluster are labeled ``NOISE``.

Conventions fixed here for determinism and testability:
  * MST ties are broken by lexicographic point index.
  * Cluster stability uses the lambda = 1/distance parametrization.
  * The root cluster is never selectable, so structureless inputs
    (including n < min_cluster_size) come back as all noise.
  * A parent is preferred over its children when its stability is >=
    the summed subtree stability of the children.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["NOISE", "ClusterParams", "mutual_reachability", "hdbscan_cluster"]

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int
    min_samples: int

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValidationError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ValidationError("min_samples must be >= 1")
        if self.min_samples > self.min_cluster_size:
            raise ValidationError("min_samples must be <= min_cluster_size")


def mutual_reachability(X: np.ndarray, min_samples: int) -> np.ndarray:
    """Pairwise max(core_i, core_j, d_ij) with Euclidean distances."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    if n - 1 < min_samples:
        raise ValidationError(f"need more than min_samples={min_samples} points")
    core = np.sort(dist, axis=1)[:, min_samples]  # column 0 is self (0.0)
    mr = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mr, 0.0)
    return mr


def _prim_mst(mr: np.ndarray) -> list[tuple[float, int, int]]:
    """MST edges of the complete mutual-reachability graph.

    Ties resolved toward the lowest point index via argmin scan order.
    """
    n = len(mr)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    attach = np.zeros(n, dtype=np.intp)
    in_tree[0] = True
    best[1:] = mr[0, 1:]
    edges = []
    for _ in range(n - 1):
        candidates = np.where(~in_tree, best, np.inf)
        j = int(np.argmin(candidates))
        i = int(attach[j])
        edges.append((float(best[j]), min(i, j), max(i, j)))
        in_tree[j] = True
        update = (~in_tree) & (mr[j] < best)
        best[update] = mr[j, update]
        attach[update] = j
    return edges


def _single_linkage(edges, n):
    """Union-find agglomeration; returns per-internal-node child pairs.

    Internal node q (q = n..2n-2) stores (left, right, distance, size).
    """
    order = sorted(edges, key=lambda e: (e[0], e[1], e[2]))
    parent = list(range(2 * n - 1))
    current = list(range(n))  # component representative -> hierarchy node
    sizes = [1] * n + [0] * (n - 1)
    nodes = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    nxt = n
    for dist, a, b in order:
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        left, right = current[ra], current[rb]
        nodes[nxt] = (left, right, dist, sizes[left] + sizes[right])
        sizes[nxt] = sizes[left] + sizes[right]
        parent[ra] = rb
        current[rb] = nxt
        nxt += 1
    return nodes


def _leaves_under(nodes, node, n):
    out = []
    stack = [node]
    while stack:
        q = stack.pop()
        if q < n:
            out.append(q)
        else:
            left, right, _, _ = nodes[q]
            stack.extend((left, right))
    return out


def _split_components(nodes, node, n):
    """Multi-way split: maximal subtrees merging strictly below this level.

    Exactly tied merge distances (common under mutual reachability,
    where one core distance dominates several pairs) are treated as a
    single atomic split, which keeps the condensed tree independent of
    MST tie-break order.
    """
    dist = nodes[node][2]
    comps = []
    stack = [nodes[node][0], nodes[node][1]]
    while stack:
        c = stack.pop()
        if c >= n and nodes[c][2] == dist:
            stack.extend(nodes[c][:2])
        else:
            comps.append(c)
    return comps, dist


def _condense(nodes, n, mcs):
    """Condensed tree rows (parent, child, lambda, size, child_is_cluster)."""
    root = 2 * n - 2
    rows = []
    birth = {0: 0.0}
    children_of = defaultdict(list)
    next_cluster = 1
    stack = [(root, 0)]
    while stack:
        node, cluster = stack.pop()
        comps, dist = _split_components(nodes, node, n)
        lam = np.inf if dist == 0.0 else 1.0 / dist
        sizes = [1 if c < n else nodes[c][3] for c in comps]
        big = [(c, sz) for c, sz in zip(comps, sizes) if sz >= mcs]
        small = [c for c, sz in zip(comps, sizes) if sz < mcs]
        if len(big) >= 2:
            for child_node, sz in big:
                cid = next_cluster
                next_cluster += 1
                rows.append((cluster, cid, lam, sz, True))
                children_of[cluster].append(cid)
                birth[cid] = lam
                stack.append((child_node, cid))
            for c in small:
                for pt in _leaves_under(nodes, c, n):
                    rows.append((cluster, pt, lam, 1, False))
        elif len(big) == 1:
            for c in small:
                for pt in _leaves_under(nodes, c, n):
                    rows.append((cluster, pt, lam, 1, False))
            stack.append((big[0][0], cluster))
        else:
            for c in comps:
                for pt in _leaves_under(nodes, c, n):
                    rows.append((cluster, pt, lam, 1, False))
    return rows, birth, children_of


def _stability(rows, birth):
    stab = defaultdict(float)
    for parent, _child, lam, size, _is_cluster in rows:
        stab[parent] += size * (lam - birth[parent])
    for cid in birth:
        stab.setdefault(cid, 0.0)
    return stab


def _select_excess_of_mass(birth, children_of, stab):
    """Bottom-up selection; the root (cluster 0) is never selectable."""
    selected = {}
    subtree = {}
    for cid in sorted(birth, reverse=True):
        kids = children_of.get(cid, [])
        if not kids:
            selected[cid] = cid != 0
            subtree[cid] = stab[cid]
        else:
            child_sum = sum(subtree[k] for k in kids)
            if cid != 0 and stab[cid] >= child_sum:
                selected[cid] = True
                subtree[cid] = stab[cid]
            else:
                selected[cid] = False
                subtree[cid] = child_sum
    # Keep only the shallowest selected cluster along each branch.
    final = []
    stack = [0]
    while stack:
        cid = stack.pop()
        if selected.get(cid, False):
            final.append(cid)
        else:
            stack.extend(children_of.get(cid, []))
    return sorted(final)


def hdbscan_cluster(X: np.ndarray, params: ClusterParams) -> np.ndarray:
    """Cluster rows of X; returns one label per row (NOISE = -1).

    Deterministic for a fixed input order; degenerate inputs (too few
    points for a core distance or for any cluster) are all noise.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    if n == 0:
        return np.empty(0, dtype=int)
    if n - 1 < params.min_samples or n < params.min_cluster_size or n < 2:
        return np.full(n, NOISE, dtype=int)

    mr = mutual_reachability(X, params.min_samples)
    edges = _prim_mst(mr)
    nodes = _single_linkage(edges, n)
    rows, birth, children_of = _condense(nodes, n, params.min_cluster_size)
    stab = _stability(rows, birth)
    final = _select_excess_of_mass(birth, children_of, stab)

    labels = np.full(n, NOISE, dtype=int)
    point_rows = defaultdict(list)
    cluster_children = defaultdict(list)
    for parent, child, _lam, _size, is_cluster in rows:
        if is_cluster:
            cluster_children[parent].append(child)
        else:
            point_rows[parent].append(child)
    for out_label, cid in enumerate(final):
        stack = [cid]
        while stack:
            c = stack.pop()
            for pt in point_rows.get(c, []):
                labels[pt] = out_label
            stack.extend(cluster_children.get(c, []))
    return labels
