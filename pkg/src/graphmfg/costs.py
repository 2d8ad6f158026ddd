"""Convex per-node transition-cost models and their convex conjugates.

Each model prices the outgoing rate vector of a node. The conjugate
``H(i, p) = sup_{lam >= 0} lam . p - L(i, lam)`` is the node Hamiltonian; its
gradient is the maximizing rate vector. ``p`` is ordered like the node's
out-edge list; solvers pass value differences there, this module does not
care.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HamiltonianValue",
    "SeparableQuadratic",
    "SeparablePower",
    "NumericSeparable",
    "hamiltonian",
    "hamiltonian_batch",
    "verify_gradient",
]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HamiltonianValue:
    """Conjugate value and the maximizing nonnegative rate vector."""

    value: float
    gradient: np.ndarray

    def fenchel_residual(self, cost, node: int, p: np.ndarray) -> float:
        """|H + L(grad) - grad . p| at the returned optimizer."""
        return abs(
            self.value + cost.cost(node, self.gradient) - float(self.gradient @ p)
        )


def _edge_weights(graph, weights) -> np.ndarray:
    w = np.ones(graph.edge_count) if weights is None else np.asarray(weights, float)
    if w.shape != (graph.edge_count,):
        raise ValueError(
            f"expected {graph.edge_count} edge weights, got shape {w.shape}"
        )
    if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
        raise ValueError("edge weights must be finite and > 0")
    w.setflags(write=False)
    return w


class SeparableQuadratic:
    """L(i, lam) = sum_j (c_ij / 2) lam_j^2 with per-edge weights c > 0.

    Closed-form conjugate: H = sum_j max(p_j, 0)^2 / (2 c_ij), gradient
    max(p_j, 0) / c_ij.
    """

    def __init__(self, graph, weights=None):
        self.graph = graph
        self.weights = _edge_weights(graph, weights)

    def _c(self, node: int) -> np.ndarray:
        return self.weights[list(self.graph.out_edges[node])]

    def cost(self, node: int, rates) -> float:
        lam = np.asarray(rates, float)
        return float(0.5 * self._c(node) @ (lam * lam)) if lam.size else 0.0

    def value_and_grad(self, node: int, p: np.ndarray):
        if p.size == 0:
            return 0.0, np.zeros(0)
        c = self._c(node)
        pp = np.maximum(p, 0.0)
        return float(pp @ (pp / c)) / 2.0, pp / c

    def batch_value_and_grad(self, node: int, p_rows: np.ndarray):
        c = self._c(node)
        pp = np.maximum(p_rows, 0.0)
        grad = pp / c
        return 0.5 * np.einsum("ij,ij->i", pp, grad), grad


class SeparablePower:
    """L(i, lam) = sum_j c_ij lam_j^r / r with exponent r > 1."""

    def __init__(self, graph, exponent: float, weights=None):
        if not (exponent > 1.0 and math.isfinite(exponent)):
            raise ValueError(f"exponent must be > 1, got {exponent}")
        self.graph = graph
        self.exponent = float(exponent)
        self.weights = _edge_weights(graph, weights)

    def _c(self, node: int) -> np.ndarray:
        return self.weights[list(self.graph.out_edges[node])]

    def cost(self, node: int, rates) -> float:
        lam = np.asarray(rates, float)
        if lam.size == 0:
            return 0.0
        r = self.exponent
        return float(self._c(node) @ (lam**r)) / r

    def value_and_grad(self, node: int, p: np.ndarray):
        if p.size == 0:
            return 0.0, np.zeros(0)
        r = self.exponent
        c = self._c(node)
        pp = np.maximum(p, 0.0)
        grad = (pp / c) ** (1.0 / (r - 1.0))
        value = float((1.0 - 1.0 / r) * np.sum(c ** (-1.0 / (r - 1.0)) * pp ** (r / (r - 1.0))))
        return value, grad

    def batch_value_and_grad(self, node: int, p_rows: np.ndarray):
        r = self.exponent
        c = self._c(node)
        pp = np.maximum(p_rows, 0.0)
        grad = (pp / c) ** (1.0 / (r - 1.0))
        vals = (1.0 - 1.0 / r) * np.sum(c ** (-1.0 / (r - 1.0)) * pp ** (r / (r - 1.0)), axis=1)
        return vals, grad


class NumericSeparable:
    """Per-edge strictly convex C^2 costs given as callables.

    ``cost_fn(i, j, lam)`` and ``deriv_fn(i, j, lam)`` take 0-indexed source
    and target nodes. The conjugate is solved edge by edge: bracket the
    maximizer of ``lam * p - C(lam)`` by doubling the interval until the
    objective's derivative turns negative, then golden-section to an argument
    tolerance of 1e-10. Light sampling checks at construction reject costs
    that are visibly non-convex or sub-linear at infinity.
    """

    BRACKET_TOL = 1e-10

    def __init__(self, graph, cost_fn, deriv_fn):
        self.graph = graph
        self.cost_fn = cost_fn
        self.deriv_fn = deriv_fn
        self._validate()

    def _validate(self):
        lam_grid = np.array([0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 25.0])
        for s, t in self.graph.edges:
            c0 = self.cost_fn(s, t, 0.0)
            if not (math.isfinite(c0) and c0 >= 0.0):
                raise ValueError(
                    f"cost at rate 0 on edge {s + 1}->{t + 1} must be finite and >= 0"
                )
            d = [self.deriv_fn(s, t, x) for x in lam_grid]
            if any(d[k + 1] < d[k] - 1e-9 for k in range(len(d) - 1)):
                raise ValueError(
                    f"cost on edge {s + 1}->{t + 1} is not convex on the sample grid"
                )
            ratios = [self.cost_fn(s, t, x) / x for x in (1e2, 1e4, 1e6)]
            if not (ratios[2] > ratios[1] > ratios[0] or math.isinf(ratios[2])):
                raise ValueError(
                    f"cost on edge {s + 1}->{t + 1} does not look superlinear"
                )

    def cost(self, node: int, rates) -> float:
        lam = np.asarray(rates, float)
        total = 0.0
        for pos, e in enumerate(self.graph.out_edges[node]):
            s, t = self.graph.edges[e]
            total += self.cost_fn(s, t, float(lam[pos]))
        return total

    def _edge_conjugate(self, s: int, t: int, p: float):
        base = self.cost_fn(s, t, 0.0)
        if p - self.deriv_fn(s, t, 0.0) <= 0.0:
            return -base, 0.0
        hi = 1.0
        for _ in range(80):
            if p - self.deriv_fn(s, t, hi) < 0.0:
                break
            hi *= 2.0
        else:
            raise RuntimeError(
                f"failed to bracket the rate maximizer on edge {s + 1}->{t + 1}: "
                "cost does not grow superlinearly in practice"
            )
        lam = _golden_max(lambda x: x * p - self.cost_fn(s, t, x), 0.0, hi, self.BRACKET_TOL)
        return lam * p - self.cost_fn(s, t, lam), lam

    def value_and_grad(self, node: int, p: np.ndarray):
        if p.size == 0:
            return 0.0, np.zeros(0)
        value = 0.0
        grad = np.empty(p.size)
        for pos, e in enumerate(self.graph.out_edges[node]):
            s, t = self.graph.edges[e]
            v, lam = self._edge_conjugate(s, t, float(p[pos]))
            value += v
            grad[pos] = lam
        return value, grad

    def batch_value_and_grad(self, node: int, p_rows: np.ndarray):
        vals = np.empty(p_rows.shape[0])
        grads = np.empty_like(p_rows)
        for k in range(p_rows.shape[0]):
            vals[k], grads[k] = self.value_and_grad(node, p_rows[k])
        return vals, grads


def _golden_max(fn, lo: float, hi: float, xtol: float) -> float:
    a, b = lo, hi
    c = b - (b - a) * _INV_PHI
    d = a + (b - a) * _INV_PHI
    fc, fd = fn(c), fn(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * _INV_PHI
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * _INV_PHI
            fd = fn(d)
    return 0.5 * (a + b)


def hamiltonian(cost, node: int, p) -> HamiltonianValue:
    """Conjugate of the node's cost at costate ``p``.

    ``p`` must match the node's out-degree; a degree-0 node takes an empty
    vector and gets value 0 (the supremum over the empty rate vector with
    zero cost).
    """
    pv = np.atleast_1d(np.asarray(p, dtype=float))
    d = cost.graph.out_degree(node)
    if pv.size != d:
        raise ValueError(f"node {node + 1} has out-degree {d}, got p of size {pv.size}")
    if not np.all(np.isfinite(pv)):
        raise ValueError(f"non-finite costate entries for node {node + 1}")
    value, grad = cost.value_and_grad(node, pv)
    grad = np.asarray(grad, float)
    grad.setflags(write=False)
    return HamiltonianValue(value=value, gradient=grad)


def hamiltonian_batch(cost, node: int, p_rows: np.ndarray):
    """Vectorized conjugate over rows of costates for one node."""
    p_rows = np.asarray(p_rows, dtype=float)
    if p_rows.shape[1] != cost.graph.out_degree(node):
        raise ValueError("costate row width does not match node out-degree")
    return cost.batch_value_and_grad(node, p_rows)


def verify_gradient(cost, node: int, p, h: float = 1e-6) -> float:
    """Max abs error of central differences of H against its gradient."""
    if h <= 0.0:
        raise ValueError("step must be positive")
    pv = np.atleast_1d(np.asarray(p, dtype=float))
    if cost.graph.out_degree(node) == 0:
        return 0.0
    hv = hamiltonian(cost, node, pv)
    worst = 0.0
    for j in range(pv.size):
        lo, hi = pv.copy(), pv.copy()
        lo[j] -= h
        hi[j] += h
        fd = (hamiltonian(cost, node, hi).value - hamiltonian(cost, node, lo).value) / (2.0 * h)
        worst = max(worst, abs(fd - hv.gradient[j]))
    return worst
