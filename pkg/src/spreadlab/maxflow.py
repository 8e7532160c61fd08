"""Integer max-flow with min-cut extraction.

Two engines behind one interface: a pure-Python Dinic implementation that
works with arbitrary-precision integer capacities, and the scipy.sparse
csgraph solver for larger graphs whose capacities fit comfortably in int32
(the scipy solver silently overflows beyond that, so the guard is strict).
Both return per-arc flows and the source side of a minimum cut, obtained by
a reachability sweep of the residual graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_INT32_SAFE = 2 ** 30


@dataclass
class FlowResult:
    value: int
    arc_flows: list  # flow on each input arc, same order
    source_side: set  # nodes reachable from the source in the residual graph


class Dinic:
    """Blocking-flow max-flow on adjacency lists; Python ints throughout."""

    def __init__(self, n: int):
        self.n = n
        self.head: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[int] = []

    def add_edge(self, u: int, v: int, cap: int) -> int:
        """Returns the arc id of the forward edge."""
        arc = len(self.to)
        self.head[u].append(arc)
        self.to.append(v)
        self.cap.append(cap)
        self.head[v].append(arc + 1)
        self.to.append(u)
        self.cap.append(0)
        return arc

    def _bfs(self, s: int, t: int) -> bool:
        self.level = [-1] * self.n
        self.level[s] = 0
        queue = [s]
        for u in queue:
            for arc in self.head[u]:
                v = self.to[arc]
                if self.cap[arc] > 0 and self.level[v] < 0:
                    self.level[v] = self.level[u] + 1
                    queue.append(v)
        return self.level[t] >= 0

    def _dfs(self, s: int, t: int) -> int:
        # iterative blocking-flow augmentation with per-node arc pointers
        total = 0
        it = self.iter
        path: list[int] = []
        u = s
        while True:
            if u == t:
                bottleneck = min(self.cap[arc] for arc in path)
                for arc in path:
                    self.cap[arc] -= bottleneck
                    self.cap[arc ^ 1] += bottleneck
                total += bottleneck
                # retreat to just after the first saturated arc
                for i, arc in enumerate(path):
                    if self.cap[arc] == 0:
                        del path[i:]
                        break
                u = s if not path else self.to[path[-1]]
                continue
            advanced = False
            while it[u] < len(self.head[u]):
                arc = self.head[u][it[u]]
                v = self.to[arc]
                if self.cap[arc] > 0 and self.level[v] == self.level[u] + 1:
                    path.append(arc)
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                if u == s:
                    return total
                self.level[u] = -1
                u = self.to[path[-1] ^ 1]
                it[u] += 1
                path.pop()

    def max_flow(self, s: int, t: int) -> int:
        flow = 0
        while self._bfs(s, t):
            self.iter = [0] * self.n
            flow += self._dfs(s, t)
        return flow

    def residual_source_side(self, s: int) -> set[int]:
        seen = {s}
        queue = [s]
        for u in queue:
            for arc in self.head[u]:
                v = self.to[arc]
                if self.cap[arc] > 0 and v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen


def _solve_python(n, arcs, s, t) -> FlowResult:
    g = Dinic(n)
    ids = [g.add_edge(u, v, c) for (u, v, c) in arcs]
    original = [c for (_, _, c) in arcs]
    value = g.max_flow(s, t)
    flows = [original[i] - g.cap[arc] for i, arc in enumerate(ids)]
    return FlowResult(value, flows, g.residual_source_side(s))


def _solve_scipy(n, arcs, s, t) -> FlowResult:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import breadth_first_order, maximum_flow

    if not arcs:
        return FlowResult(0, [], {s})
    u = np.fromiter((a[0] for a in arcs), dtype=np.int64, count=len(arcs))
    v = np.fromiter((a[1] for a in arcs), dtype=np.int64, count=len(arcs))
    c = np.fromiter((a[2] for a in arcs), dtype=np.int64, count=len(arcs))
    cap = csr_matrix((c.astype(np.int32), (u, v)), shape=(n, n))
    result = maximum_flow(cap, s, t)
    flow = result.flow
    arc_flows = np.asarray(flow[u, v]).ravel().astype(np.int64)
    arc_flows = np.maximum(arc_flows, 0)
    # residual adjacency: leftover forward capacity or nonzero reverse flow
    residual = ((cap - flow) > 0) + (flow.T > 0)
    order = breadth_first_order(residual, s, directed=True, return_predecessors=False)
    return FlowResult(int(result.flow_value), [int(f) for f in arc_flows], set(int(x) for x in order))


def max_flow(n: int, arcs: list[tuple[int, int, int]], s: int, t: int,
             backend: str = "auto") -> FlowResult:
    """Max flow from s to t over directed arcs (u, v, capacity >= 0).

    Capacities must be nonnegative integers. The returned cut side always
    contains s and never t, and the arcs it crosses are saturated.
    """
    for (u, v, c) in arcs:
        if c < 0:
            raise ValueError("capacities must be nonnegative")
    if backend not in ("auto", "python", "scipy"):
        raise ValueError(f"unknown backend {backend!r}")
    total_out = sum(c for (u, v, c) in arcs if u == s)
    fits_int32 = total_out < _INT32_SAFE and all(c < _INT32_SAFE for (_, _, c) in arcs)
    if backend == "scipy" or (backend == "auto" and fits_int32 and len(arcs) > 4000):
        if not fits_int32:
            raise ValueError("capacities too large for the scipy backend")
        return _solve_scipy(n, arcs, s, t)
    return _solve_python(n, arcs, s, t)
