"""Natural visibility graphs for positive-valued series.

A node per temporal point; an edge joins (i, j) when the straight line
between their bar tops clears every intermediate bar strictly.  Two
constructions are provided: a cubic reference (``vg_oracle``) and a
divide-and-conquer one (``vg_fast``) that must produce the identical edge
set.  Visibility comparisons use the cross-multiplied form

    (x_k - x_i) * (t_j - t_i)  <  (x_j - x_i) * (t_k - t_i)

so no division is performed and an intermediate point lying exactly on
the sight line blocks visibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit


class VisibilityError(ValueError):
    """Raised for series that cannot be mapped to a visibility graph."""


@dataclass(frozen=True)
class VisibilityGraph:
    """Undirected simple graph on temporally ordered nodes.

    ``edges`` is an (M, 2) int32 array with i < j per row, sorted
    lexicographically.  Node index equals time index.
    """

    n: int
    edges: np.ndarray
    _adj: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int32).reshape(-1, 2)
        if e.size:
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
        object.__setattr__(self, "edges", e)
        adj = [[] for _ in range(self.n)]
        for i, j in e:
            adj[i].append(int(j))
            adj[j].append(int(i))
        object.__setattr__(self, "_adj", [sorted(a) for a in adj])

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def neighbors(self, i: int) -> list[int]:
        return self._adj[i]

    def degree_array(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def __eq__(self, other) -> bool:
        if not isinstance(other, VisibilityGraph):
            return NotImplemented
        return self.n == other.n and self.edge_set() == other.edge_set()


@njit(cache=True)
def _oracle_kernel(x, t, out):
    n = x.shape[0]
    cnt = 0
    for i in range(n):
        for j in range(i + 1, n):
            visible = True
            for k in range(i + 1, j):
                if not ((x[k] - x[i]) * (t[j] - t[i]) < (x[j] - x[i]) * (t[k] - t[i])):
                    visible = False
                    break
            if visible:
                out[cnt, 0] = i
                out[cnt, 1] = j
                cnt += 1
    return cnt


@njit(cache=True)
def _fast_kernel(x, t, out):
    # Divide and conquer on the slice maximum: no sight line can cross the
    # maximum, so all edges in [lo, hi] are either incident to it (found by
    # two linear sweeps tracking the extremal blocking slope) or lie fully
    # on one side.
    n = x.shape[0]
    cnt = 0
    stack = np.empty((2 * n + 4, 2), dtype=np.int64)
    top = 0
    stack[top, 0] = 0
    stack[top, 1] = n - 1
    top += 1
    while top > 0:
        top -= 1
        lo = stack[top, 0]
        hi = stack[top, 1]
        if hi - lo < 1:
            continue
        m = lo
        for i in range(lo + 1, hi + 1):
            if x[i] > x[m]:
                m = i
        if m > lo:
            # immediate left neighbour is always visible
            out[cnt, 0] = m - 1
            out[cnt, 1] = m
            cnt += 1
            b = m - 1
            for j in range(m - 2, lo - 1, -1):
                # slopes about m are negative-denominator; j is visible
                # iff its slope is strictly below every blocker's
                if (x[j] - x[m]) * (t[b] - t[m]) < (x[b] - x[m]) * (t[j] - t[m]):
                    out[cnt, 0] = j
                    out[cnt, 1] = m
                    cnt += 1
                    b = j
        if m < hi:
            out[cnt, 0] = m
            out[cnt, 1] = m + 1
            cnt += 1
            b = m + 1
            for j in range(m + 2, hi + 1):
                if (x[j] - x[m]) * (t[b] - t[m]) > (x[b] - x[m]) * (t[j] - t[m]):
                    out[cnt, 0] = m
                    out[cnt, 1] = j
                    cnt += 1
                    b = j
        stack[top, 0] = lo
        stack[top, 1] = m - 1
        top += 1
        stack[top, 0] = m + 1
        stack[top, 1] = hi
        top += 1
    return cnt


def _validate(series, t) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.shape[0] < 2:
        raise VisibilityError(f"series must have length >= 2, got {x.shape[0]}")
    if not np.all(x > 0.0):
        bad = int(np.argmin(x > 0.0))
        raise VisibilityError(f"series values must be strictly positive (index {bad}: {x[bad]})")
    if t is None:
        tt = np.arange(x.shape[0], dtype=np.float64)
    else:
        tt = np.asarray(t, dtype=np.float64).ravel()
        if tt.shape != x.shape:
            raise VisibilityError("time coordinates must match series length")
        if not np.all(np.diff(tt) > 0.0):
            raise VisibilityError("time coordinates must be strictly increasing")
    return x, tt


def vg_oracle(series, t=None) -> VisibilityGraph:
    """Reference construction: test every pair against every intermediate point."""
    x, tt = _validate(series, t)
    n = x.shape[0]
    out = np.empty((n * (n - 1) // 2, 2), dtype=np.int32)
    cnt = _oracle_kernel(x, tt, out)
    return VisibilityGraph(n, out[:cnt])


def vg_fast(series, t=None) -> VisibilityGraph:
    """Divide-and-conquer construction; edge set identical to ``vg_oracle``."""
    x, tt = _validate(series, t)
    n = x.shape[0]
    out = np.empty((n * (n - 1) // 2, 2), dtype=np.int32)
    cnt = _fast_kernel(x, tt, out)
    return VisibilityGraph(n, out[:cnt])


def degrees(g: VisibilityGraph) -> np.ndarray:
    """Per-node degree, indexed by time position."""
    return g.degree_array()


def serialize_graph(g: VisibilityGraph) -> str:
    """Edge-list text: node count on line 1, then one ``i j`` pair per line."""
    lines = [str(g.n)]
    lines.extend(f"{int(i)} {int(j)}" for i, j in g.edges)
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> VisibilityGraph:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise VisibilityError("empty graph text")
    try:
        n = int(lines[0])
        pairs = []
        for ln in lines[1:]:
            a, b = ln.split()
            i, j = int(a), int(b)
            if not (0 <= i < j < n):
                raise ValueError
            pairs.append((i, j))
    except ValueError as exc:
        raise VisibilityError(f"malformed graph text: {exc}") from exc
    edges = np.array(pairs, dtype=np.int32).reshape(-1, 2)
    if len({(i, j) for i, j in pairs}) != len(pairs):
        raise VisibilityError("duplicate edges in graph text")
    return VisibilityGraph(n, edges)
