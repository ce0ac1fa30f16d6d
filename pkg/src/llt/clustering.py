"""Ward-linkage agglomerative clustering and threshold cutting.

Two independent routes produce the dendrogram. `agglomerate` maintains
inter-cluster distances incrementally with the Lance-Williams recurrence for
Ward linkage; `naive_agglomerate` recomputes every candidate linkage from
scratch at each step (from true centroids when the embedding vectors are
available, otherwise via the coordinate-free Ward identity on pairwise
distances). They must produce identical merge sequences; the test suite
holds them to that.

Heights live on the input distance scale: a two-point merge's height equals
their input distance. Ties (linkages equal within 1e-12 relative tolerance)
resolve to the lexicographically smallest node-id pair in both routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

_TIE_RTOL = 1e-12
_MONOTONE_SLACK = 1e-9


class InvalidMatrix(Exception):
    """Input is not a symmetric, zero-diagonal, non-negative distance matrix."""


class Merge(NamedTuple):
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    """Binary merge tree. Leaves are nodes 0..n-1 (in matrix order); the
    k-th merge creates internal node n+k. The root is the last merge."""

    leaves: list[str]
    merges: list[Merge]

    def __post_init__(self) -> None:
        self.validate()

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def n_nodes(self) -> int:
        return self.n_leaves + len(self.merges)

    @property
    def root(self) -> int:
        return self.n_nodes - 1

    def is_leaf(self, node: int) -> bool:
        return node < self.n_leaves

    def children(self, node: int) -> tuple[int, int] | None:
        if self.is_leaf(node):
            return None
        merge = self.merges[node - self.n_leaves]
        return merge.left, merge.right

    def node_height(self, node: int) -> float:
        return 0.0 if self.is_leaf(node) else self.merges[node - self.n_leaves].height

    def node_size(self, node: int) -> int:
        return 1 if self.is_leaf(node) else self.merges[node - self.n_leaves].size

    def node_members(self, node: int) -> list[int]:
        """Sorted leaf indices under `node`."""
        out: list[int] = []
        stack = [node]
        while stack:
            cur = stack.pop()
            if self.is_leaf(cur):
                out.append(cur)
            else:
                stack.extend(self.children(cur))
        out.sort()
        return out

    def parent_map(self) -> dict[int, int]:
        parents: dict[int, int] = {}
        for k, merge in enumerate(self.merges):
            parents[merge.left] = self.n_leaves + k
            parents[merge.right] = self.n_leaves + k
        return parents

    def lca(self, a: int, b: int) -> int:
        parents = self.parent_map()
        ancestors = {a}
        cur = a
        while cur in parents:
            cur = parents[cur]
            ancestors.add(cur)
        cur = b
        while cur not in ancestors:
            cur = parents[cur]
        return cur

    def validate(self) -> None:
        n = self.n_leaves
        if n < 1:
            raise ValueError("dendrogram needs at least one leaf")
        merged: set[int] = set()
        prev_height = 0.0
        for k, merge in enumerate(self.merges):
            node = n + k
            for child in (merge.left, merge.right):
                if not 0 <= child < node:
                    raise ValueError(f"merge {k} references unborn node {child}")
                if child in merged:
                    raise ValueError(f"node {child} merged twice")
                merged.add(child)
            if merge.height < prev_height - _MONOTONE_SLACK:
                raise ValueError(
                    f"height inversion at merge {k}: {merge.height} < {prev_height}"
                )
            prev_height = max(prev_height, merge.height)
            left_size = 1 if merge.left < n else self.merges[merge.left - n].size
            right_size = 1 if merge.right < n else self.merges[merge.right - n].size
            if merge.size != left_size + right_size:
                raise ValueError(f"merge {k} size {merge.size} != children sum")
        if len(self.merges) != n - 1:
            raise ValueError(f"{len(self.merges)} merges for {n} leaves")

    def to_dict(self) -> dict:
        return {
            "leaves": list(self.leaves),
            "merges": [[m.left, m.right, m.height, m.size] for m in self.merges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dendrogram":
        return cls(
            leaves=list(data["leaves"]),
            merges=[Merge(int(l), int(r), float(h), int(s)) for l, r, h, s in data["merges"]],
        )


@dataclass
class Partition:
    threshold: float
    groups: list[list[int]] = field(default_factory=list)  # sorted leaf indices
    anchors: list[int] = field(default_factory=list)  # subtree root per group

    def labels(self, n_leaves: int) -> list[int]:
        out = [-1] * n_leaves
        for g, members in enumerate(self.groups):
            for leaf in members:
                out[leaf] = g
        return out


def _check_matrix(matrix) -> np.ndarray:
    D = np.asarray(matrix, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise InvalidMatrix("matrix contains non-finite entries")
    if np.any(D < 0):
        raise InvalidMatrix("matrix contains negative distances")
    if not np.array_equal(D, D.T):
        raise InvalidMatrix("matrix is not symmetric")
    if np.any(np.diagonal(D) != 0):
        raise InvalidMatrix("matrix diagonal is not zero")
    return D


def _default_ids(n: int) -> list[str]:
    return [str(i) for i in range(n)]


def _repair_height(h: float, prev: float) -> float:
    if h < prev - _MONOTONE_SLACK:
        raise InvalidMatrix(f"Ward height inversion: {h} after {prev}")
    return max(h, prev)


def agglomerate(matrix, leaf_ids: Sequence[str] | None = None) -> Dendrogram:
    """Ward agglomeration via the Lance-Williams recurrence (fast path)."""
    D = _check_matrix(matrix)
    n = D.shape[0]
    ids = list(leaf_ids) if leaf_ids is not None else _default_ids(n)
    if len(ids) != n:
        raise InvalidMatrix(f"{len(ids)} leaf ids for {n} rows")
    if n == 1:
        return Dendrogram(leaves=ids, merges=[])

    S = D.astype(np.float64) ** 2  # squared linkage, updated in place
    np.fill_diagonal(S, np.inf)
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.float64)
    slot_node = list(range(n))  # slot index -> current node id
    merges: list[Merge] = []
    prev_height = 0.0

    for step in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], S, np.inf)
        m = masked.min()
        tol = _TIE_RTOL * max(1.0, abs(m))
        cand = np.argwhere(masked <= m + tol)
        best_slot = None
        best_key = None
        for i, j in cand:
            if i >= j:
                continue
            a, b = slot_node[i], slot_node[j]
            key = (a, b) if a < b else (b, a)
            if best_key is None or key < best_key:
                best_key = key
                best_slot = (int(i), int(j))
        i, j = best_slot
        d2 = S[i, j]
        height = _repair_height(math.sqrt(max(0.0, d2)), prev_height)
        prev_height = height
        ni, nj = sizes[i], sizes[j]
        new_size = ni + nj
        merges.append(Merge(best_key[0], best_key[1], height, int(new_size)))

        # Lance-Williams update for Ward, applied to every other active slot
        others = active.copy()
        others[i] = others[j] = False
        nk = sizes[others]
        new_d2 = ((ni + nk) * S[others, i] + (nj + nk) * S[others, j] - nk * d2) / (
            ni + nj + nk
        )
        S[others, i] = new_d2
        S[i, others] = new_d2
        active[j] = False
        sizes[i] = new_size
        slot_node[i] = n + step

    return Dendrogram(leaves=ids, merges=merges)


def naive_agglomerate(matrix, leaf_ids: Sequence[str] | None = None, *, vectors=None) -> Dendrogram:
    """Test-oracle Ward agglomeration: every step recomputed from scratch.

    With `vectors` (one embedding row per leaf), candidate linkages come from
    true cluster centroids: d2(A,B) = 2|A||B|/(|A|+|B|) * ||centroid_A -
    centroid_B||^2. Without vectors, the same quantity is derived from the
    pairwise distances alone (mean cross term minus within-cluster terms).
    No incremental update is used anywhere.
    """
    D = _check_matrix(matrix)
    n = D.shape[0]
    ids = list(leaf_ids) if leaf_ids is not None else _default_ids(n)
    if len(ids) != n:
        raise InvalidMatrix(f"{len(ids)} leaf ids for {n} rows")
    if n == 1:
        return Dendrogram(leaves=ids, merges=[])

    X = None
    if vectors is not None:
        X = np.asarray(vectors, dtype=np.float64)
        if X.shape[0] != n:
            raise InvalidMatrix(f"{X.shape[0]} vectors for {n} rows")
    S = D.astype(np.float64) ** 2

    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}  # node id -> leaves
    merges: list[Merge] = []
    prev_height = 0.0

    def pair_d2_from_matrix(A: list[int], B: list[int]) -> float:
        na, nb = len(A), len(B)
        cross = float(S[np.ix_(A, B)].mean())
        wa = float(S[np.ix_(A, A)].sum()) / (2.0 * na * na)
        wb = float(S[np.ix_(B, B)].sum()) / (2.0 * nb * nb)
        return 2.0 * na * nb / (na + nb) * (cross - wa - wb)

    for step in range(n - 1):
        node_ids = sorted(clusters)
        a_count = len(node_ids)
        if X is not None:
            # every step rebuilt from scratch: centroids, sizes, all linkages
            C = np.stack([X[clusters[v]].mean(axis=0) for v in node_ids])
            sz = np.array([len(clusters[v]) for v in node_ids], dtype=np.float64)
            sq = np.einsum("ij,ij->i", C, C)
            gap = sq[:, None] + sq[None, :] - 2.0 * (C @ C.T)
            W2 = 2.0 * (sz[:, None] * sz[None, :]) / (sz[:, None] + sz[None, :]) * gap
            iu = np.triu_indices(a_count, k=1)
            vals = W2[iu]
        else:
            iu = np.triu_indices(a_count, k=1)
            vals = np.array(
                [
                    pair_d2_from_matrix(clusters[node_ids[i]], clusters[node_ids[j]])
                    for i, j in zip(*iu)
                ]
            )
        best_d2 = float(vals.min())
        tol = _TIE_RTOL * max(1.0, abs(best_d2))
        best_pair = None
        best_val = None
        for idx in np.flatnonzero(vals <= best_d2 + tol):
            pair = (node_ids[iu[0][idx]], node_ids[iu[1][idx]])
            if best_pair is None or pair < best_pair:
                best_pair = pair
                best_val = float(vals[idx])
        a, b = best_pair
        height = _repair_height(math.sqrt(max(0.0, best_val)), prev_height)
        prev_height = height
        members = clusters.pop(a) + clusters.pop(b)
        new_node = n + step
        clusters[new_node] = members
        merges.append(Merge(a, b, height, len(members)))

    return Dendrogram(leaves=ids, merges=merges)


def cut(tree: Dendrogram, threshold: float) -> Partition:
    """Maximal subtrees whose root merge height <= threshold (plus singleton
    leaves left unmerged below the threshold)."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    n = tree.n_leaves
    # heights are monotone, so the merges at or below the threshold are a prefix
    p = 0
    while p < len(tree.merges) and tree.merges[p].height <= threshold:
        p += 1
    covered: set[int] = set()
    for k in range(p):
        covered.add(tree.merges[k].left)
        covered.add(tree.merges[k].right)
    anchors = [i for i in range(n) if i not in covered]
    anchors += [n + k for k in range(p) if (n + k) not in covered]
    groups = [(tree.node_members(a), a) for a in anchors]
    groups.sort(key=lambda g: g[0][0])
    return Partition(
        threshold=threshold,
        groups=[g[0] for g in groups],
        anchors=[g[1] for g in groups],
    )


def suggest_threshold(tree: Dendrogram) -> float:
    """Midpoint of the largest gap between consecutive sorted merge heights,
    ignoring gaps that start in the top tenth of the height range (those
    separate already-disparate super-clusters, not families). Ties resolve to
    the lowest gap; with no eligible gap the largest height is returned.
    Advisory only — an analyst-chosen threshold always wins.
    """
    if not tree.merges:
        raise ValueError("need at least one merge to suggest a threshold")
    heights = sorted(m.height for m in tree.merges)
    if len(heights) == 1:
        return heights[0]
    fence = heights[0] + 0.9 * (heights[-1] - heights[0])
    best_gap = -math.inf
    best_low = None
    for low, high in zip(heights, heights[1:]):
        if low >= fence:
            continue
        gap = high - low
        if gap > best_gap:
            best_gap = gap
            best_low = (low, high)
    if best_low is None or best_gap <= 0:
        return heights[-1]
    return (best_low[0] + best_low[1]) / 2.0


def to_newick(tree: Dendrogram) -> str:
    """Newick with branch lengths (parent height minus child height)."""

    def render(node: int, parent_height: float) -> str:
        length = parent_height - tree.node_height(node)
        if tree.is_leaf(node):
            return f"{tree.leaves[node]}:{length:.12g}"
        left, right = tree.children(node)
        h = tree.node_height(node)
        return f"({render(left, h)},{render(right, h)}):{length:.12g}"

    root = tree.root
    if tree.is_leaf(root):
        return f"{tree.leaves[root]}:0;"
    left, right = tree.children(root)
    h = tree.node_height(root)
    return f"({render(left, h)},{render(right, h)}):0;"


def to_dot(tree: Dendrogram) -> str:
    """Graphviz rendering of the merge tree; deterministic node order."""
    lines = ["digraph dendrogram {", "  rankdir=BT;", '  node [shape=box, fontsize=10];']
    for i in range(tree.n_leaves):
        lines.append(f'  n{i} [label="{tree.leaves[i]}"];')
    for k, merge in enumerate(tree.merges):
        node = tree.n_leaves + k
        lines.append(f'  n{node} [label="h={merge.height:.6g} size={merge.size}"];')
        lines.append(f"  n{merge.left} -> n{node};")
        lines.append(f"  n{merge.right} -> n{node};")
    lines.append("}")
    return "\n".join(lines) + "\n"
