"""Independent equilibrium oracles.

The expected payoff of an arbitrary admissible control against a frozen
population path satisfies a linear backward ODE (the generator form of the
expectation), so it is evaluated exactly up to integrator error, with no
sampling noise:

    dv/dt(t,i) + sum_j lam_t(i,j) (v(t,j) - v(t,i)) - L(i, lam_t(i,.))
        + f(i, m(t)) = 0,          v(T,i) = g(i, m(T)).

A Nash gap check evaluates a documented, seeded family of deviations and
reports the largest payoff improvement any of them achieves over the
candidate equilibrium values. Sampling can refute optimality, not prove it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coupling import Coupling
from .graph import Graph, TimeGrid
from .solver import ControlField, TrajectoryPair

__all__ = [
    "PayoffReport",
    "NashGapReport",
    "MonotonicityReport",
    "evaluate_payoff",
    "default_deviations",
    "nash_gap",
    "check_monotonicity",
]


@dataclass(frozen=True)
class PayoffReport:
    """Per-node payoffs of a tested control and gaps below the candidate value."""

    values: np.ndarray
    gaps: np.ndarray


@dataclass(frozen=True)
class NashGapReport:
    max_gap: float
    worst_node: int
    worst_deviation: int
    deviation_count: int
    oracle_error: float


@dataclass(frozen=True)
class MonotonicityReport:
    sample_count: int
    f_verdict: str
    g_verdict: str
    f_worst_value: float
    g_worst_value: float
    f_worst_pair: tuple
    g_worst_pair: tuple
    f_margin: float
    g_margin: float
    violations: int


def _payoff_rhs(graph, cost, coupling, v, lam_row, m):
    dv = np.empty(graph.node_count)
    for i in range(graph.node_count):
        oe = graph.out_edges[i]
        if oe:
            lam = np.array([lam_row[e] for e in oe])
            jump = float(lam @ (np.array([v[graph.edges[e][1]] for e in oe]) - v[i]))
            run = jump - cost.cost(i, lam)
        else:
            run = 0.0
        dv[i] = -(run + coupling.f(i, m))
    return dv


def _cubic_midpoints(y: np.ndarray) -> np.ndarray:
    """Step-midpoint values by 4-point Lagrange interpolation (linear if K < 3).

    The distribution path is smooth in time, so this keeps the midpoint data
    at the integrator's own order; controls are interpolated linearly instead,
    since deviation fields may carry jumps.
    """
    K = y.shape[0] - 1
    if K < 3:
        return 0.5 * (y[:-1] + y[1:])
    mids = np.empty((K, y.shape[1]))
    for k in range(K):
        base = min(max(k - 1, 0), K - 3)
        tau = (k + 0.5) - base
        w = np.array(
            [
                -(tau - 1) * (tau - 2) * (tau - 3) / 6.0,
                tau * (tau - 2) * (tau - 3) / 2.0,
                -tau * (tau - 1) * (tau - 3) / 2.0,
                tau * (tau - 1) * (tau - 2) / 6.0,
            ]
        )
        mids[k] = w @ y[base : base + 4]
    return mids


def evaluate_payoff(graph, cost, coupling, control: ControlField, m_traj, grid: TimeGrid):
    """Expected payoff v(0, .) of ``control`` against the frozen path ``m_traj``.

    RK4 backward on the control's grid; rates are linearly interpolated at
    step midpoints, the distribution with a 4-point stencil.
    """
    lam = np.asarray(control.rates, float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("control rates must be finite")
    m_nodes = np.asarray(m_traj, float)
    K = grid.steps
    dt = grid.dt
    lam_mids = 0.5 * (lam[:-1] + lam[1:])
    m_mids = _cubic_midpoints(m_nodes)
    v = np.array([coupling.g(i, m_nodes[K]) for i in range(graph.node_count)])
    for k in range(K - 1, -1, -1):
        k1 = _payoff_rhs(graph, cost, coupling, v, lam[k + 1], m_nodes[k + 1])
        k2 = _payoff_rhs(graph, cost, coupling, v - 0.5 * dt * k1, lam_mids[k], m_mids[k])
        k3 = _payoff_rhs(graph, cost, coupling, v - 0.5 * dt * k2, lam_mids[k], m_mids[k])
        k4 = _payoff_rhs(graph, cost, coupling, v - dt * k3, lam[k], m_nodes[k])
        v = v - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return v


def _dyadic_windows(levels: int) -> list[tuple[float, float]]:
    wins = []
    for lev in range(levels):
        parts = 2**lev
        wins.extend(((w / parts, (w + 1) / parts) for w in range(parts)))
    return wins


def default_deviations(
    graph,
    control: ControlField,
    grid: TimeGrid,
    epsilons: Sequence[float] = (0.1, 0.5),
    window_levels: int = 3,
    random_count: int = 20,
    seed: int = 42,
    rate_bound: Optional[float] = None,
) -> list[ControlField]:
    """The documented deviation family around a candidate optimal control.

    Every edge rate is bumped by +/- eps over every dyadic time window
    (clipped at 0), plus ``random_count`` seeded piecewise-constant controls
    on four equal windows with rates uniform in [0, rate_bound].
    """
    lam = np.asarray(control.rates, float)
    K = grid.steps
    t_frac = np.arange(K + 1) / K
    devs: list[ControlField] = []
    for e in range(graph.edge_count):
        for lo, hi in _dyadic_windows(window_levels):
            in_win = (t_frac >= lo - 1e-15) & (t_frac <= hi + 1e-15)
            for eps in epsilons:
                for sign in (1.0, -1.0):
                    rates = lam.copy()
                    rates[in_win, e] = np.maximum(rates[in_win, e] + sign * eps, 0.0)
                    devs.append(ControlField(grid=grid, graph=graph, rates=rates))
    bound = rate_bound if rate_bound is not None else max(1.0, 2.0 * control.max_rate())
    children = np.random.SeedSequence(seed).spawn(random_count)
    for child in children:
        rng = np.random.default_rng(child)
        window_rates = rng.uniform(0.0, bound, size=(4, graph.edge_count))
        win_idx = np.minimum((t_frac * 4).astype(int), 3)
        devs.append(ControlField(grid=grid, graph=graph, rates=window_rates[win_idx]))
    return devs


def nash_gap(
    graph,
    cost,
    coupling: Coupling,
    equilibrium: TrajectoryPair,
    deviations: Sequence[ControlField],
    candidate_control: Optional[ControlField] = None,
) -> NashGapReport:
    """Largest payoff improvement over u(0, .) among the tested deviations.

    A gap at or below solver tolerance certifies that no tested deviation is
    profitable. When ``candidate_control`` is given, ``oracle_error`` reports
    how far its own payoff sits from u(0, .), which should vanish up to
    integrator error for a true equilibrium.
    """
    grid = equilibrium.grid
    u0 = equilibrium.u[0]
    best = (-np.inf, -1, -1)
    for d, dev in enumerate(deviations):
        values = evaluate_payoff(graph, cost, coupling, dev, equilibrium.m, grid)
        gaps = values - u0
        i = int(np.argmax(gaps))
        if gaps[i] > best[0]:
            best = (float(gaps[i]), i, d)
    oracle_error = np.nan
    if candidate_control is not None:
        values = evaluate_payoff(graph, cost, coupling, candidate_control, equilibrium.m, grid)
        oracle_error = float(np.abs(values - u0).max())
    return NashGapReport(
        max_gap=best[0],
        worst_node=best[1],
        worst_deviation=best[2],
        deviation_count=len(deviations),
        oracle_error=oracle_error,
    )


def _bilinear_form(fn, m1, m2, n) -> float:
    return float(sum((fn(i, m1) - fn(i, m2)) * (m1[i] - m2[i]) for i in range(n)))


def check_monotonicity(
    coupling: Coupling,
    n_nodes: int,
    sample_count: int = 10_000,
    rng_seed: int = 42,
) -> MonotonicityReport:
    """Sampled strict-monotonicity test of the uniqueness criterion.

    Draws pairs of distinct simplex points and evaluates
    sum_i (f(i,m1) - f(i,m2)) (m1_i - m2_i) and the same form for g. Verdict
    per function: "monotone" when the form is strictly negative on every
    sampled distinct pair, "degenerate" when it vanishes identically,
    "non_monotone" with a witness otherwise. The margin is the lower bound
    eps with form <= -eps * |m1 - m2|^2 over the samples.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    state = {
        "f": {"worst": -np.inf, "pair": None, "margin": np.inf, "zero": True, "viol": 0},
        "g": {"worst": -np.inf, "pair": None, "margin": np.inf, "zero": True, "viol": 0},
    }
    ones = np.ones(n_nodes)
    for _ in range(sample_count):
        m1 = rng.dirichlet(ones)
        m2 = rng.dirichlet(ones)
        nsq = float(np.sum((m1 - m2) ** 2))
        if nsq < 1e-24:
            continue
        for key, fn in (("f", coupling.f), ("g", coupling.g)):
            form = _bilinear_form(fn, m1, m2, n_nodes)
            st = state[key]
            if abs(form) > 1e-14:
                st["zero"] = False
            if form > st["worst"]:
                st["worst"] = form
                st["pair"] = (m1.copy(), m2.copy())
            st["margin"] = min(st["margin"], -form / nsq)
            if form >= 0.0:
                st["viol"] += 1

    def verdict(st) -> str:
        if st["zero"]:
            return "degenerate"
        return "monotone" if st["viol"] == 0 else "non_monotone"

    sf, sg = state["f"], state["g"]
    return MonotonicityReport(
        sample_count=sample_count,
        f_verdict=verdict(sf),
        g_verdict=verdict(sg),
        f_worst_value=sf["worst"],
        g_worst_value=sg["worst"],
        f_worst_pair=sf["pair"],
        g_worst_pair=sg["pair"],
        f_margin=sf["margin"],
        g_margin=sg["margin"],
        violations=sf["viol"],
    )
