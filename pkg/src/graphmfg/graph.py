"""Directed graphs, probability-simplex points, and uniform time grids.

Nodes are 1-indexed in every file format and user-facing message; inside the
package they are 0-indexed. ``build_graph`` and the JSON helpers form that
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Graph",
    "TimeGrid",
    "build_graph",
    "graph_from_json_dict",
    "graph_to_json_dict",
    "simplex_point",
    "project_to_simplex",
    "uniform_distribution",
]

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class Graph:
    """Directed graph with a fixed global edge order.

    ``out_edges[i]`` holds edge ids leaving node ``i`` in insertion order.
    That order is the coordinate order of the rate vectors accepted by the
    cost models and of the ``lambda_out`` columns in CSV output.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    out_edges: tuple[tuple[int, ...], ...]
    in_edges: tuple[tuple[int, ...], ...]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def out_degree(self, i: int) -> int:
        return len(self.out_edges[i])

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(self.edges[e][1] for e in self.out_edges[i])

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(self.edges[e][0] for e in self.in_edges[i])

    def edge_index(self, source: int, target: int) -> int:
        for e in self.out_edges[source]:
            if self.edges[e][1] == target:
                return e
        raise KeyError(f"no edge {source + 1}->{target + 1}")

    @property
    def max_out_degree(self) -> int:
        return max((len(o) for o in self.out_edges), default=0)


def build_graph(edge_list, node_count: int) -> Graph:
    """Build a :class:`Graph` from 1-indexed ``(source, target)`` pairs.

    Rejects self-loops, duplicate edges and out-of-range endpoints. The
    per-node out-neighborhood order is the order of first appearance in
    ``edge_list``.
    """
    if not isinstance(node_count, int) or node_count < 1:
        raise ValueError(f"node_count must be a positive integer, got {node_count!r}")
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for pair in edge_list:
        s, t = pair
        for v in (s, t):
            if not isinstance(v, int) or not (1 <= v <= node_count):
                raise ValueError(
                    f"edge ({s},{t}) references node {v} outside 1..{node_count}"
                )
        if s == t:
            raise ValueError(f"self-loop at node {s} is not allowed")
        if (s, t) in seen:
            raise ValueError(f"duplicate edge {s}->{t}")
        seen.add((s, t))
        edges.append((s - 1, t - 1))

    out: list[list[int]] = [[] for _ in range(node_count)]
    inc: list[list[int]] = [[] for _ in range(node_count)]
    for e, (s, t) in enumerate(edges):
        out[s].append(e)
        inc[t].append(e)
    return Graph(
        node_count=node_count,
        edges=tuple(edges),
        out_edges=tuple(tuple(o) for o in out),
        in_edges=tuple(tuple(o) for o in inc),
    )


def graph_to_json_dict(graph: Graph) -> dict:
    """Serialize with 1-indexed nodes: ``{"nodes": N, "edges": [[s,t],...]}``."""
    return {
        "nodes": graph.node_count,
        "edges": [[s + 1, t + 1] for s, t in graph.edges],
    }


def graph_from_json_dict(doc: dict) -> Graph:
    if set(doc) != {"nodes", "edges"}:
        unknown = sorted(set(doc) - {"nodes", "edges"})
        raise ValueError(f"graph document has unexpected keys {unknown}")
    return build_graph([tuple(e) for e in doc["edges"]], doc["nodes"])


def simplex_point(values, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a distribution vector and return it as a read-only array."""
    m = np.array(values, dtype=float)
    if m.ndim != 1 or m.size < 1:
        raise ValueError("distribution must be a 1-D vector")
    if not np.all(np.isfinite(m)):
        raise ValueError("distribution has non-finite entries")
    if np.any(m < 0.0):
        raise ValueError(f"distribution has negative coordinate {m.min():.3e}")
    s = math.fsum(m.tolist())
    if abs(s - 1.0) > tol:
        raise ValueError(f"distribution mass {s!r} differs from 1 by more than {tol}")
    m.setflags(write=False)
    return m


def uniform_distribution(n: int) -> np.ndarray:
    return simplex_point(np.full(n, 1.0 / n))


def project_to_simplex(x) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sort-and-threshold projection, followed by a compensated-summation fix-up
    so the coordinates sum to 1.0 exactly. Idempotent; points already on the
    simplex are returned unchanged up to the fix-up.
    """
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("input must be a 1-D vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = j[u + (1.0 - css) / j > 0.0][-1]
    tau = (1.0 - css[rho - 1]) / rho
    m = np.maximum(v + tau, 0.0)
    # nudge the largest coordinate until the compensated sum is exactly 1
    for _ in range(5):
        s = math.fsum(m.tolist())
        if s == 1.0:
            break
        k = int(np.argmax(m))
        m[k] = max(m[k] - (s - 1.0), 0.0)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * horizon / steps`` on ``[0, horizon]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ValueError(f"steps must be an integer >= 1, got {self.steps!r}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.horizon, self.steps + 1)
        t.setflags(write=False)
        return t
