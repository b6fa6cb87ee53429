"""Latent hierarchy from soft confusions: Ward clustering and distance correlations."""

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dataset import default_table
from .errors import InvalidInputError


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    node: int
    size: int


@dataclass(frozen=True)
class Dendrogram:
    merges: tuple
    leaf_labels: tuple

    @property
    def n_leaves(self):
        return len(self.leaf_labels)

    @property
    def heights(self):
        return np.array([m.height for m in self.merges])

    def to_linkage(self):
        """scipy-style (n-1) x 4 linkage matrix."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float)

    def to_nested(self):
        nodes = {i: {"id": i, "label": lab} for i, lab in enumerate(self.leaf_labels)}
        for m in self.merges:
            nodes[m.node] = {"id": m.node, "height": m.height,
                             "children": [nodes.pop(m.left), nodes.pop(m.right)]}
        (root,) = nodes.values()
        return root

    def merge_lines(self):
        lines = ["left\tright\theight\tnode\tsize"]
        lines += [f"{m.left}\t{m.right}\t{m.height:.10g}\t{m.node}\t{m.size}" for m in self.merges]
        return "\n".join(lines) + "\n"

    def leaf_order(self):
        """Left-to-right leaf order of the tree."""
        children = {m.node: (m.left, m.right) for m in self.merges}
        order, stack = [], [self.merges[-1].node] if self.merges else [0]
        while stack:
            node = stack.pop()
            if node in children:
                left, right = children[node]
                stack.extend([right, left])
            else:
                order.append(node)
        return order


def ward_cluster(features, labels=None):
    """Agglomerative Ward clustering.

    Cluster distances follow the Lance-Williams recurrence on squared
    Euclidean distances; a merge height is sqrt(2 * increase in
    within-cluster sum of squares), which equals the Euclidean distance
    for two singletons. Ties go to the pair with the lowest node ids.
    """
    x = np.asarray(features, dtype=float)
    n = x.shape[0]
    if x.ndim != 2 or n < 2:
        raise InvalidInputError("need at least 2 feature vectors")
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(n))
    diff = x[:, None, :] - x[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    ids = list(range(n))  # node id per slot
    sizes = [1] * n
    active = np.ones(n, dtype=bool)
    merges = []
    for step in range(n - 1):
        best = None
        slots = np.flatnonzero(active)
        for a in range(len(slots)):
            for b in range(a + 1, len(slots)):
                i, j = slots[a], slots[b]
                key = (d2[i, j], min(ids[i], ids[j]), max(ids[i], ids[j]))
                if best is None or key < best[0]:
                    best = (key, i, j)
        (dist2, _, _), i, j = best
        ni, nj = sizes[i], sizes[j]
        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        for m in others:
            nm = sizes[m]
            d2[i, m] = d2[m, i] = (
                (ni + nm) * d2[i, m] + (nj + nm) * d2[j, m] - nm * dist2
            ) / (ni + nj + nm)
        left, right = sorted((ids[i], ids[j]))
        node = n + step
        merges.append(Merge(left, right, float(np.sqrt(max(dist2, 0.0))), node, ni + nj))
        ids[i] = node
        sizes[i] = ni + nj
        active[j] = False
    return Dendrogram(tuple(merges), labels)


def _apply_merges(dendrogram, n_merges):
    n = dendrogram.n_leaves
    parent = list(range(2 * n - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for m in dendrogram.merges[:n_merges]:
        parent[find(m.left)] = m.node
        parent[find(m.right)] = m.node
    roots = [find(i) for i in range(n)]
    relabel = {}
    return np.array([relabel.setdefault(r, len(relabel)) for r in roots])


def clusters_at_cutoff(dendrogram, cutoff):
    """Flat clusters after applying every merge with height <= ``cutoff``."""
    if cutoff < 0:
        raise InvalidInputError("cutoff must be nonnegative")
    n_merges = int(np.sum(dendrogram.heights <= cutoff))
    return _apply_merges(dendrogram, n_merges)


def cut_n_clusters(dendrogram, k):
    """Flat clusters obtained by stopping with ``k`` clusters left."""
    if not 1 <= k <= dendrogram.n_leaves:
        raise InvalidInputError(f"k must be in [1, {dendrogram.n_leaves}]")
    return _apply_merges(dendrogram, dendrogram.n_leaves - k)


def cluster_count_curve(dendrogram):
    """Step function ``[(cutoff, n_clusters), ...]`` starting at cutoff 0."""
    heights = dendrogram.heights
    n = dendrogram.n_leaves
    cutoffs = np.unique(np.concatenate([[0.0], heights]))
    return [(float(c), int(n - np.sum(heights <= c))) for c in cutoffs]


def knee_cutoff(dendrogram, min_clusters=2):
    """Cutoff in the middle of the widest gap between consecutive merge heights.

    Only gaps that leave at least ``min_clusters`` clusters are considered.
    """
    h = dendrogram.heights
    n = dendrogram.n_leaves
    gaps = np.diff(h)[: max(1, n - min_clusters)]
    k = int(np.argmax(gaps)) if len(gaps) else 0
    return float(0.5 * (h[k] + h[k + 1])) if len(h) > 1 else float(h[0])


def cluster_names(assignment, leaf_labels, block, table=None):
    """Dominant articulatory attribute per flat cluster."""
    table = table or default_table()
    names = {}
    for c in np.unique(assignment):
        members = [leaf_labels[i] for i in np.flatnonzero(assignment == c)]
        vals = Counter(table.attribute(cv, block) for cv in members)
        names[int(c)] = vals.most_common(1)[0][0]
    return names


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    labels: tuple
    space: str = "network"


def pairwise_distances(vectors, metric="euclidean", labels=None, space="network"):
    x = np.asarray(vectors, dtype=float)
    diff = x[:, None, :] - x[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    if metric == "euclidean":
        d = np.sqrt(d2)
    elif metric == "sqeuclidean":
        d = d2
    else:
        raise InvalidInputError(f"unknown metric {metric!r}")
    np.fill_diagonal(d, 0.0)
    labels = tuple(labels) if labels is not None else tuple(range(len(x)))
    return DistanceMatrix(d, labels, space)


@dataclass(frozen=True)
class CorrelationSet:
    block: str
    labels: tuple
    values: np.ndarray
    excluded: tuple = ()

    @property
    def median(self):
        return float(np.median(self.values))


def articulatory_distances(cvs, block, table=None, metric="euclidean"):
    table = table or default_table()
    return pairwise_distances(table.matrix(cvs, [block]), metric, cvs, "articulatory")


def articulatory_distance_correlation(net_dist, block, table=None, metric="euclidean"):
    """Per-CV Pearson correlation of network vs articulatory distance rows.

    For CV i, correlates ``net[i, j]`` with ``art[i, j]`` over j != i.
    Rows with zero variance in either space are excluded (warning).
    """
    cvs = net_dist.labels
    art = articulatory_distances(cvs, block, table, metric).values
    net = net_dist.values
    kept, values, excluded = [], [], []
    n = len(cvs)
    for i in range(n):
        others = np.arange(n) != i
        a, b = net[i, others], art[i, others]
        if np.std(a) == 0 or np.std(b) == 0:
            excluded.append(cvs[i])
            continue
        kept.append(cvs[i])
        values.append(float(np.corrcoef(a, b)[0, 1]))
    if excluded:
        warnings.warn(f"zero-variance distance rows excluded for block {block}: {excluded}")
    return CorrelationSet(block, tuple(kept), np.array(values), tuple(excluded))
