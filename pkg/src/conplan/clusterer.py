"""Density-based clustering of latent embeddings.

The pipeline is the classic density hierarchy: mutual-reachability
distances, a minimum spanning tree (Prim over the dense matrix, lowest
index on ties), the single-linkage merge tree, a condensed tree that prunes
children below min_cluster_size, and stability-based (excess-of-mass)
cluster extraction with outliers labeled -1. A lone dense region is allowed
to be reported as a single cluster.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int = 20
    min_samples: int = 10

    def __post_init__(self):
        if self.min_samples < 1 or self.min_cluster_size < 1:
            raise InvalidArgumentError("min_samples and min_cluster_size must be >= 1")
        if self.min_samples > self.min_cluster_size:
            raise InvalidArgumentError("min_samples must be <= min_cluster_size")


@dataclass
class CondensedTree:
    """Rows of (parent, child, lam, size); cluster ids start at N (root)."""

    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    size: np.ndarray
    n_points: int

    def cluster_rows(self):
        return self.size > 1


@dataclass
class ClusterLabels:
    labels: np.ndarray
    stabilities: dict
    tree: CondensedTree = None
    selected: tuple = ()


def pairwise_distances(coords):
    coords = np.asarray(coords, dtype=float)
    sq = np.einsum("ij,ij->i", coords, coords)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (coords @ coords.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    np.fill_diagonal(d, 0.0)
    return d


def mutual_reachability(coords, min_samples):
    """Dense mutual-reachability matrix.

    core(i) is the distance to the min_samples-th nearest other point;
    d_mreach(i, j) = max(core(i), core(j), d(i, j)).
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if min_samples >= n:
        raise InvalidArgumentError(f"min_samples={min_samples} must be < N={n}")
    d = pairwise_distances(coords)
    d_others = d + np.diag(np.full(n, np.inf))
    core = np.sort(d_others, axis=1)[:, min_samples - 1]
    m = np.maximum(d, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(m, 0.0)
    return m


def prim_mst(dist):
    """MST edges (a, b, weight) of a dense distance matrix, in insertion
    order; argmin tie-breaks pick the lowest index."""
    n = dist.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    in_tree[0] = True
    best[0] = np.inf
    np.minimum(best, dist[0], out=best)
    parent[dist[0] <= best] = 0
    best[0] = np.inf
    edges = np.empty((n - 1, 3))
    for step in range(n - 1):
        masked = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(masked))
        edges[step] = (parent[nxt], nxt, best[nxt])
        in_tree[nxt] = True
        improve = dist[nxt] < best
        improve &= ~in_tree
        parent[improve] = nxt
        np.minimum(best, np.where(in_tree, np.inf, dist[nxt]), out=best)
    return edges


class _UnionFind:
    """Union-find over points plus merge nodes (single-linkage labeling)."""

    def __init__(self, n):
        self.parent = np.full(2 * n - 1, -1, dtype=np.int64)
        self.size = np.concatenate([np.ones(n, dtype=np.int64),
                                    np.zeros(n - 1, dtype=np.int64)])
        self.next_label = n

    def find(self, x):
        root = x
        while self.parent[root] != -1:
            root = self.parent[root]
        while self.parent[x] != -1:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        new = self.next_label
        self.next_label += 1
        self.parent[a] = new
        self.parent[b] = new
        self.size[new] = self.size[a] + self.size[b]
        return new


def single_linkage(mst_edges):
    """Sorted-edge union-find labeling: rows (left, right, dist, size)."""
    order = np.argsort(mst_edges[:, 2], kind="stable")
    edges = mst_edges[order]
    n = len(edges) + 1
    uf = _UnionFind(n)
    linkage = np.empty((n - 1, 4))
    for k, (a, b, w) in enumerate(edges):
        ra = uf.find(int(a))
        rb = uf.find(int(b))
        linkage[k] = (ra, rb, w, uf.size[ra] + uf.size[rb])
        uf.union(ra, rb)
    return linkage


def _leaves(linkage, node, n):
    out = []
    stack = [int(node)]
    while stack:
        x = stack.pop()
        if x < n:
            out.append(x)
        else:
            stack.append(int(linkage[x - n, 0]))
            stack.append(int(linkage[x - n, 1]))
    return out


def condense_tree(linkage, min_cluster_size):
    """Prune the merge tree: children smaller than min_cluster_size fall
    out as points; surviving clusters get compact ids starting at N.

    Merges at exactly equal distance are treated as one simultaneous
    multi-way split (the level-set semantics); mutual-reachability
    distances tie routinely because core distances repeat across pairs.
    """
    min_cluster_size = max(2, min_cluster_size)
    n = len(linkage) + 1
    root = 2 * n - 2
    relabel = {root: n}
    next_label = n + 1
    rows_parent, rows_child, rows_lam, rows_size = [], [], [], []
    ignore = set()
    for node in range(root, n - 1, -1):  # top-down: children have lower ids
        if node in ignore:
            continue
        dist = linkage[node - n, 2]
        lam = 1.0 / dist if dist > 0.0 else np.inf
        label = relabel[node]
        # frontier of the multi-way split: descend through merges tied at
        # exactly this distance
        frontier = []
        stack = [int(linkage[node - n, 0]), int(linkage[node - n, 1])]
        while stack:
            ch = stack.pop()
            if ch >= n and linkage[ch - n, 2] == dist:
                ignore.add(ch)
                stack.append(int(linkage[ch - n, 0]))
                stack.append(int(linkage[ch - n, 1]))
            else:
                frontier.append(ch)
        sizes = [int(linkage[ch - n, 3]) if ch >= n else 1 for ch in frontier]
        big = [(ch, sz) for ch, sz in zip(frontier, sizes) if sz >= min_cluster_size]
        small = [ch for ch, sz in zip(frontier, sizes) if sz < min_cluster_size]
        if len(big) >= 2:
            for ch, sz in sorted(big, key=lambda t: -t[1]):
                relabel[ch] = next_label
                next_label += 1
                rows_parent.append(label)
                rows_child.append(relabel[ch])
                rows_lam.append(lam)
                rows_size.append(sz)
        elif len(big) == 1:
            relabel[big[0][0]] = label  # cluster continues under the same id
        for ch in small:
            for point in _leaves(linkage, ch, n):
                rows_parent.append(label)
                rows_child.append(point)
                rows_lam.append(lam)
                rows_size.append(1)
            if ch >= n:
                ignore.update(_descendant_nodes(linkage, ch, n))
    return CondensedTree(parent=np.array(rows_parent, dtype=np.int64),
                         child=np.array(rows_child, dtype=np.int64),
                         lam=np.array(rows_lam),
                         size=np.array(rows_size, dtype=np.int64),
                         n_points=n)


def _descendant_nodes(linkage, node, n):
    stack = [int(node)]
    while stack:
        x = stack.pop()
        if x >= n:
            yield x
            stack.append(int(linkage[x - n, 0]))
            stack.append(int(linkage[x - n, 1]))


def compute_stability(tree):
    """Cluster id -> sum over child rows of (lambda - birth) * size."""
    births = {int(tree.n_points): 0.0}
    cluster_rows = tree.cluster_rows()
    for p, c, lam in zip(tree.parent[cluster_rows], tree.child[cluster_rows],
                         tree.lam[cluster_rows]):
        births[int(c)] = float(lam)
    stability = {cid: 0.0 for cid in births}
    for p, lam, size in zip(tree.parent, tree.lam, tree.size):
        lam = min(float(lam), 1e308)  # inf-lambda (zero-distance) rows saturate
        stability[int(p)] += (lam - births[int(p)]) * int(size)
    return stability


def extract_eom(tree, stability):
    """Excess-of-mass selection; returns the chosen cluster ids (the root
    may win, i.e. a single cluster is allowed)."""
    cluster_rows = tree.cluster_rows()
    children = {}
    for p, c in zip(tree.parent[cluster_rows], tree.child[cluster_rows]):
        children.setdefault(int(p), []).append(int(c))
    node_list = sorted(stability, reverse=True)  # leaves before parents
    propagated = dict(stability)
    is_selected = {cid: False for cid in stability}
    for node in node_list:
        subtree = sum(propagated[c] for c in children.get(node, []))
        if children.get(node) and subtree > stability[node]:
            propagated[node] = subtree
            is_selected[node] = False
        else:
            is_selected[node] = True
            propagated[node] = stability[node]
    # top-down: a selected ancestor absorbs any selected descendants
    selected = []
    stack = [int(tree.n_points)]
    while stack:
        node = stack.pop()
        if is_selected[node]:
            selected.append(node)
        else:
            stack.extend(sorted(children.get(node, []), reverse=True))
    return tuple(sorted(selected))


def labels_from_selection(tree, selected):
    """Point labels: each point joins the nearest selected ancestor of the
    cluster it fell out of, else noise."""
    parent_of = {}
    cluster_rows = tree.cluster_rows()
    for p, c in zip(tree.parent[cluster_rows], tree.child[cluster_rows]):
        parent_of[int(c)] = int(p)
    selected_set = set(selected)
    labels = np.full(tree.n_points, -1, dtype=np.int64)
    point_rows = ~cluster_rows
    order = {cid: k for k, cid in enumerate(selected)}
    for p, c in zip(tree.parent[point_rows], tree.child[point_rows]):
        node = int(p)
        while node is not None:
            if node in selected_set:
                labels[int(c)] = order[node]
                break
            node = parent_of.get(node)
    return labels


def cluster(coords, p):
    """Full clustering of latent coordinates; see the module docstring.

    Fewer points than min_cluster_size yields an all-noise labeling (with
    a warning), not an error.
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if n < max(p.min_cluster_size, 2) or p.min_samples >= n:
        log.warning("N=%d below min_cluster_size=%d: labeling everything noise",
                    n, p.min_cluster_size)
        return ClusterLabels(labels=np.full(n, -1, dtype=np.int64), stabilities={})
    m = mutual_reachability(coords, p.min_samples)
    mst = prim_mst(m)
    linkage = single_linkage(mst)
    tree = condense_tree(linkage, p.min_cluster_size)
    stability = compute_stability(tree)
    selected = extract_eom(tree, stability)
    labels = labels_from_selection(tree, selected)
    stabilities = {k: stability[cid] for k, cid in enumerate(selected)}
    return ClusterLabels(labels=labels, stabilities=stabilities,
                         tree=tree, selected=selected)
