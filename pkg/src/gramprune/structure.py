"""Relatedness structures over a layer's output channels.

Output-channel Gram columns carry the class-wise signal available before any
coefficients are solved, so both structures are built from them: a thresholded
Pearson-correlation graph for the fused penalty, and an agglomerative binary
tree (correlation distance) whose nested groups drive the tree penalty.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .exceptions import ZeroVarianceWarning

Linkage = Literal["average", "complete"]


@dataclass(frozen=True)
class CorrelationGraph:
    """Edges (l, m, f) with l < m and |f| above the threshold."""

    n_nodes: int
    edges: tuple[tuple[int, int, float], ...]
    threshold: float

    def to_debug_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "threshold": self.threshold,
            "edges": [[l, m, f] for l, m, f in self.edges],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_debug_dict(), sort_keys=True)


@dataclass(frozen=True)
class TreeNode:
    id: int
    children: tuple[int, ...]   # empty for leaves
    group: tuple[int, ...]      # member column indices, sorted
    h: float | None             # in (0,1) for internal nodes, None for leaves
    dissimilarity: float | None = None  # merge height, None for leaves

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class HierTree:
    """Binary agglomerative tree over columns: 2*n_leaves - 1 nodes."""

    nodes: tuple[TreeNode, ...]
    root: int
    n_leaves: int

    def __post_init__(self) -> None:
        if len(self.nodes) != 2 * self.n_leaves - 1:
            raise ValueError(
                f"expected {2 * self.n_leaves - 1} nodes, got {len(self.nodes)}"
            )

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def parents(self) -> np.ndarray:
        parent = np.full(len(self.nodes), -1, dtype=np.int64)
        for node in self.nodes:
            for c in node.children:
                parent[c] = node.id
        return parent

    def to_debug_dict(self) -> dict:
        return {
            "root": self.root,
            "n_leaves": self.n_leaves,
            "nodes": [
                {
                    "id": n.id,
                    "children": list(n.children),
                    "group": list(n.group),
                    "h": n.h,
                    "dissimilarity": n.dissimilarity,
                }
                for n in self.nodes
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_debug_dict(), sort_keys=True)


def _center_columns(cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered columns plus a zero-variance mask (exactly-constant columns)."""
    cols = np.asarray(cols, dtype=np.float64)
    constant = np.ptp(cols, axis=0) == 0
    centered = cols - cols.mean(axis=0, keepdims=True)
    centered[:, constant] = 0.0
    return centered, constant


def pearson(u, v) -> float:
    """Pearson correlation; 0.0 when either vector has zero variance."""
    r, _ = pearson_flagged(u, v)
    return r


def pearson_flagged(u, v) -> tuple[float, bool]:
    """Pearson correlation plus a flag marking an undefined (zero-variance) case."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.size} vs {v.size}")
    if u.size < 2:
        raise ValueError("need at least 2 samples")
    uc = u - u.mean()
    vc = v - v.mean()
    nu = np.linalg.norm(uc)
    nv = np.linalg.norm(vc)
    if np.ptp(u) == 0 or np.ptp(v) == 0 or nu == 0 or nv == 0:
        return 0.0, True
    r = float(uc @ vc / (nu * nv))
    return float(np.clip(r, -1.0, 1.0)), False


def _correlation_matrix(cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centered, constant = _center_columns(cols)
    norms = np.linalg.norm(centered, axis=0)
    dead = constant | (norms == 0)
    safe = np.where(dead, 1.0, norms)
    z = centered / safe
    r = np.clip(z.T @ z, -1.0, 1.0)
    r[dead, :] = 0.0
    r[:, dead] = 0.0
    np.fill_diagonal(r, 1.0)
    return r, dead


def build_graph(y_cols: np.ndarray, th: float = 0.6) -> CorrelationGraph:
    """Link channel pairs whose |Pearson correlation| exceeds ``th``."""
    y_cols = np.asarray(y_cols, dtype=np.float64)
    if y_cols.ndim != 2 or y_cols.shape[1] < 1:
        raise ValueError("y_cols must be a (rows, channels) matrix")
    if not 0 <= th < 1:
        raise ValueError(f"threshold must lie in [0, 1), got {th}")
    r, dead = _correlation_matrix(y_cols)
    if dead.any():
        warnings.warn(
            f"{int(dead.sum())} zero-variance column(s) treated as uncorrelated",
            ZeroVarianceWarning,
            stacklevel=2,
        )
    k = y_cols.shape[1]
    edges = []
    for l in range(k):
        if dead[l]:
            continue
        for m in range(l + 1, k):
            if not dead[m] and abs(r[l, m]) > th:
                edges.append((l, m, float(r[l, m])))
    return CorrelationGraph(n_nodes=k, edges=tuple(edges), threshold=float(th))


def build_tree(
    y_cols: np.ndarray,
    linkage: Linkage = "average",
    node_height: float | Literal["dissimilarity"] = "dissimilarity",
) -> HierTree:
    """Agglomerate columns under correlation distance d = 1 - pearson.

    Ties break toward the lexicographically smallest active pair, so the
    topology is deterministic. ``node_height`` sets h per internal node:
    ``"dissimilarity"`` maps each merge height onto (0.01, 0.99) relative to
    the largest merge, a float gives every internal node that constant.
    """
    y_cols = np.asarray(y_cols, dtype=np.float64)
    if y_cols.ndim != 2 or y_cols.shape[1] < 2:
        raise ValueError("need at least 2 columns to build a tree")
    k = y_cols.shape[1]
    r, dead = _correlation_matrix(y_cols)
    if dead.any():
        warnings.warn(
            f"{int(dead.sum())} zero-variance column(s) placed at distance 1",
            ZeroVarianceWarning,
            stacklevel=2,
        )
    dist = 1.0 - r
    dist[dead, :] = 1.0
    dist[:, dead] = 1.0
    np.fill_diagonal(dist, 0.0)

    total = 2 * k - 1
    big = np.inf
    d = np.full((total, total), big)
    d[:k, :k] = dist
    active = np.zeros(total, dtype=bool)
    active[:k] = True
    sizes = np.ones(total, dtype=np.int64)
    nodes: list[TreeNode] = [
        TreeNode(id=i, children=(), group=(i,), h=None) for i in range(k)
    ]
    merge_heights: list[float] = []

    iu = np.triu_indices(total, k=1)
    for new_id in range(k, total):
        mask = active[iu[0]] & active[iu[1]]
        vals = np.where(mask, d[iu], big)
        flat = int(np.argmin(vals))  # first minimum = lexicographically smallest pair
        a, b = int(iu[0][flat]), int(iu[1][flat])
        height = float(d[a, b])
        merge_heights.append(height)
        group = tuple(sorted(nodes[a].group + nodes[b].group))
        nodes.append(
            TreeNode(id=new_id, children=(a, b), group=group, h=None,
                     dissimilarity=height)
        )
        others = np.flatnonzero(active)
        others = others[(others != a) & (others != b)]
        if linkage == "average":
            upd = (sizes[a] * d[a, others] + sizes[b] * d[b, others]) / (
                sizes[a] + sizes[b]
            )
        elif linkage == "complete":
            upd = np.maximum(d[a, others], d[b, others])
        else:
            raise ValueError(f"unknown linkage {linkage!r}")
        d[new_id, others] = upd
        d[others, new_id] = upd
        sizes[new_id] = sizes[a] + sizes[b]
        active[a] = active[b] = False
        active[new_id] = True

    max_h = max(merge_heights) if merge_heights else 0.0
    finished: list[TreeNode] = []
    for node in nodes:
        if node.is_leaf:
            finished.append(node)
            continue
        if isinstance(node_height, (int, float)):
            h = float(node_height)
            if not 0 < h < 1:
                raise ValueError("constant node height must lie in (0, 1)")
        elif max_h <= 0:
            h = 0.5  # all merges at distance 0: no tightness signal
        else:
            h = float(np.clip(node.dissimilarity / max_h, 0.01, 0.99))
        finished.append(
            TreeNode(id=node.id, children=node.children, group=node.group,
                     h=h, dissimilarity=node.dissimilarity)
        )
    return HierTree(nodes=tuple(finished), root=total - 1, n_leaves=k)


def node_weights(tree: HierTree) -> np.ndarray:
    """Per-node selection weights from the h values.

    A leaf weighs the product of its ancestors' h; an internal node weighs
    (1 - h_v) times that product, the root having an empty ancestor set.
    """
    w = np.zeros(len(tree.nodes), dtype=np.float64)
    stack: list[tuple[int, float]] = [(tree.root, 1.0)]
    while stack:
        node_id, prod = stack.pop()
        node = tree.node(node_id)
        if node.is_leaf:
            w[node_id] = prod
        else:
            w[node_id] = (1.0 - node.h) * prod
            for c in node.children:
                stack.append((c, prod * node.h))
    return w
