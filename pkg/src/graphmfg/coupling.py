"""Population couplings: node payoff rates f, terminal payoffs g, and the
scalar potentials F, G that planner-side solves require."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Coupling",
    "zero_coupling",
    "crowd_aversion",
    "crowd_seeking",
    "affine_mix",
    "builtin_coupling",
    "potential_gradient_error",
    "sample_simplex_points",
]


@dataclass(frozen=True)
class Coupling:
    """f(i, m) is a payoff rate, g(i, m) a terminal payoff; optional scalar
    potentials satisfy dF/dm_i = f(i, .) and dG/dm_i = g(i, .)."""

    f: Callable[[int, np.ndarray], float]
    g: Callable[[int, np.ndarray], float]
    F: Optional[Callable[[np.ndarray], float]] = None
    G: Optional[Callable[[np.ndarray], float]] = None
    name: str = "custom"

    @property
    def has_potentials(self) -> bool:
        return self.F is not None and self.G is not None


def zero_coupling() -> Coupling:
    return Coupling(
        f=lambda i, m: 0.0,
        g=lambda i, m: 0.0,
        F=lambda m: 0.0,
        G=lambda m: 0.0,
        name="zero",
    )


def crowd_aversion(a: float = 1.0, b: float = 0.0) -> Coupling:
    """f(i,m) = -a m_i, g(i,m) = -b m_i: occupancy is penalized."""
    return Coupling(
        f=lambda i, m: -a * float(m[i]),
        g=lambda i, m: -b * float(m[i]),
        F=lambda m: -0.5 * a * float(np.dot(m, m)),
        G=lambda m: -0.5 * b * float(np.dot(m, m)),
        name="crowd_aversion",
    )


def crowd_seeking(a: float = 1.0, b: float = 0.0) -> Coupling:
    """Sign-flipped crowd aversion; still a potential game, not monotone."""
    return Coupling(
        f=lambda i, m: a * float(m[i]),
        g=lambda i, m: b * float(m[i]),
        F=lambda m: 0.5 * a * float(np.dot(m, m)),
        G=lambda m: 0.5 * b * float(np.dot(m, m)),
        name="crowd_seeking",
    )


def affine_mix(a: float, c: float, sigma, b: float = 0.0) -> Coupling:
    """f(i,m) = -a m_i + c m_{sigma(i)} with sigma a 0-indexed permutation.

    Generally not a potential game, so no planner potentials are declared.
    """
    perm = tuple(int(x) for x in sigma)
    n = len(perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"sigma must be a permutation of 0..{n - 1}, got {perm}")
    return Coupling(
        f=lambda i, m: -a * float(m[i]) + c * float(m[perm[i]]),
        g=lambda i, m: -b * float(m[i]),
        name="affine_mix",
    )


def builtin_coupling(family: str, n_nodes: int, a=1.0, b=0.0, c=0.0, sigma=None) -> Coupling:
    """Construct one of the built-in coupling families by name."""
    for label, v in (("a", a), ("b", b), ("c", c)):
        if v < 0.0:
            raise ValueError(f"coupling parameter {label} must be >= 0, got {v}")
    if family == "zero":
        return zero_coupling()
    if family == "crowd_aversion":
        return crowd_aversion(a=a, b=b)
    if family == "crowd_seeking":
        return crowd_seeking(a=a, b=b)
    if family == "affine_mix":
        perm = sigma if sigma is not None else [(i + 1) % n_nodes for i in range(n_nodes)]
        return affine_mix(a=a, c=c, sigma=perm, b=b)
    raise ValueError(f"unknown coupling family {family!r}")


def sample_simplex_points(n_nodes: int, count: int, rng, include_vertices: bool = True):
    """Dirichlet(1,..,1) samples plus the vertices and the uniform point."""
    pts = [rng.dirichlet(np.ones(n_nodes)) for _ in range(count)]
    if include_vertices:
        pts.extend(np.eye(n_nodes)[i] for i in range(n_nodes))
        pts.append(np.full(n_nodes, 1.0 / n_nodes))
    return pts


def potential_gradient_error(
    coupling: Coupling,
    n_nodes: int,
    samples: int = 200,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max finite-difference error of dF/dm_i vs f and dG/dm_i vs g.

    Checked at random interior simplex points; the potentials must be
    declared.
    """
    if not coupling.has_potentials:
        raise ValueError(f"coupling {coupling.name!r} declares no potentials")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        m = rng.dirichlet(np.ones(n_nodes))
        for i in range(n_nodes):
            for scalar, per_node in ((coupling.F, coupling.f), (coupling.G, coupling.g)):
                hi, lo = m.copy(), m.copy()
                hi[i] += step
                lo[i] -= step
                fd = (scalar(hi) - scalar(lo)) / (2.0 * step)
                worst = max(worst, abs(fd - per_node(i, m)))
    return worst
