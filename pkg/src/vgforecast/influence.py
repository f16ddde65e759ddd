"""Collective-influence node weights.

CI of a node is (d_i - 1) times the sum of (d_j - 1) over the frontier of
the shortest-path ball of radius ``l`` around it.  Leaves score zero, as
does any node whose frontier at radius ``l`` is empty.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .visibility import VisibilityGraph

DEFAULT_RADIUS = 2


@dataclass(frozen=True)
class NodeWeights:
    """Raw CI values with their min-max normalised form."""

    raw: np.ndarray
    normalized: np.ndarray
    l: int


def _bfs_distances(g: VisibilityGraph, source: int, cutoff: int | None = None) -> np.ndarray:
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    q = deque([source])
    while q:
        u = q.popleft()
        if cutoff is not None and dist[u] >= cutoff:
            continue
        for v in g.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def ball_frontier(g: VisibilityGraph, i: int, l: int) -> set[int]:
    """Nodes at shortest-path distance exactly ``l`` from node ``i``."""
    if not 0 <= i < g.n:
        raise ValueError(f"node {i} out of range for graph with {g.n} nodes")
    if l < 0:
        raise ValueError("radius must be nonnegative")
    if l == 0:
        return {i}
    dist = _bfs_distances(g, i, cutoff=l)
    return {int(v) for v in np.nonzero(dist == l)[0]}


def ci(g: VisibilityGraph, l: int = DEFAULT_RADIUS) -> np.ndarray:
    """Collective influence per node; empty frontier contributes zero."""
    deg = g.degree_array()
    out = np.zeros(g.n, dtype=np.float64)
    for i in range(g.n):
        if deg[i] <= 1:
            continue
        frontier = ball_frontier(g, i, l)
        out[i] = (deg[i] - 1) * sum(deg[j] - 1 for j in frontier)
    return out


def normalize_ci(raw) -> np.ndarray:
    """Min-max scale to [0, 1]; an all-equal input maps to all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("cannot normalize an empty weight vector")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def node_weights(g: VisibilityGraph, l: int = DEFAULT_RADIUS) -> NodeWeights:
    raw = ci(g, l)
    return NodeWeights(raw=raw, normalized=normalize_ci(raw), l=l)
