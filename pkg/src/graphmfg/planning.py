"""Planner-side solve on the discretized probability simplex.

A single backward Hamilton-Jacobi equation,

    dPhi/dt + sum_i m_i H(i, (p_j - p_i)_{j in V(i)}) + F(m) = 0,
    Phi(T, .) = G,

is stepped explicitly on the lattice {k/M : sum k = M} with a Lax-Friedrichs
numerical Hamiltonian. The aggregate Hamiltonian depends on the costate only
through differences p_j - p_i, so every spatial derivative is taken along
tangent directions e_j - e_i of the simplex; one-sided differences are used
where a lattice neighbor is missing. Off-simplex extension of the data is
never needed.

Gradient fields U_i = dPhi/dm_i are handled the same way: only the edge
differences U_j - U_i are identifiable from on-simplex data, and they are
everything downstream consumers use. The residual checker reconstructs node
fields from the differences along a fixed spanning tree (a gauge choice) and
projects the non-identifiable common mode out of the reported residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .costs import hamiltonian_batch
from .graph import Graph, TimeGrid, project_to_simplex
from .solver import ControlField

__all__ = [
    "SimplexGrid",
    "SimplexField",
    "MasterField",
    "PlanningReport",
    "MasterResidualReport",
    "ValueCheckReport",
    "build_simplex_grid",
    "planning_hamiltonian",
    "solve_planning_hj",
    "extract_master_fields",
    "master_residual",
    "characteristics_flow",
    "check_value_function",
    "default_planner_trials",
    "interpolate_field",
]

MAX_PLANNING_NODES = 3


@dataclass(frozen=True)
class SimplexGrid:
    """Lattice of compositions k/M on the probability simplex.

    ``step_index[p, q]`` is the index of point p moved one lattice step along
    the tangent direction of ordered pair q = (i, j), i.e. coordinates
    (k_i - 1, k_j + 1), or -1 when that leaves the lattice.
    """

    n_nodes: int
    resolution: int
    compositions: np.ndarray
    points: np.ndarray
    step_index: np.ndarray
    interior: np.ndarray
    pair_ids: dict
    index_map: dict

    @property
    def point_count(self) -> int:
        return self.compositions.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    def pair_id(self, i: int, j: int) -> int:
        return self.pair_ids[(i, j)]

    def index_of(self, comp) -> int:
        return self.index_map[tuple(int(x) for x in comp)]


def _enumerate_compositions(n: int, total: int):
    if n == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _enumerate_compositions(n - 1, total - head):
            yield (head, *rest)


def build_simplex_grid(n_nodes: int, resolution: int) -> SimplexGrid:
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    comps = np.array(sorted(_enumerate_compositions(n_nodes, resolution)), dtype=int)
    index = {tuple(c): p for p, c in enumerate(comps.tolist())}
    pairs = [(i, j) for i in range(n_nodes) for j in range(n_nodes) if i != j]
    pair_ids = {pq: q for q, pq in enumerate(pairs)}
    step = -np.ones((comps.shape[0], len(pairs)), dtype=int)
    for p, c in enumerate(comps.tolist()):
        for q, (i, j) in enumerate(pairs):
            if c[i] >= 1:
                moved = list(c)
                moved[i] -= 1
                moved[j] += 1
                step[p, q] = index[tuple(moved)]
    points = comps / float(resolution)
    interior = np.all(comps >= 1, axis=1)
    for arr in (comps, points, step, interior):
        arr.setflags(write=False)
    return SimplexGrid(
        n_nodes=n_nodes,
        resolution=resolution,
        compositions=comps,
        points=points,
        step_index=step,
        interior=interior,
        pair_ids=pair_ids,
        index_map=index,
    )


@dataclass(frozen=True)
class SimplexField:
    """Scalar field Phi(t_k, point), shape (K+1, P)."""

    grid: SimplexGrid
    time_grid: TimeGrid
    values: np.ndarray


@dataclass(frozen=True)
class MasterField:
    """Edge difference fields U_target - U_source, shape (K+1, P, E)."""

    grid: SimplexGrid
    time_grid: TimeGrid
    graph: Graph
    du: np.ndarray


@dataclass(frozen=True)
class PlanningReport:
    substeps_total: int
    cfl_limited_steps: int
    max_rate_bound: float


@dataclass(frozen=True)
class MasterResidualReport:
    sup_residual: float
    mean_residual: float
    residuals: np.ndarray
    interior_point_count: int


@dataclass(frozen=True)
class ValueCheckReport:
    phi0: float
    characteristics_value: float
    trial_values: np.ndarray
    max_trial_value: float
    tolerance: float
    passed: bool


def planning_hamiltonian(graph: Graph, cost, m, p) -> float:
    """Aggregate Hamiltonian sum_i m_i H(i, (p_j - p_i)_{j in V(i)}).

    Depends on ``p`` only through differences, so adding a constant to all
    coordinates leaves the value unchanged.
    """
    m = np.asarray(m, float)
    p = np.asarray(p, float)
    if m.shape != (graph.node_count,) or p.shape != (graph.node_count,):
        raise ValueError("m and p must have one coordinate per node")
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(p))):
        raise ValueError("m and p must be finite")
    total = 0.0
    for i in range(graph.node_count):
        oe = graph.out_edges[i]
        if not oe or m[i] == 0.0:
            continue
        diffs = np.array([p[graph.edges[e][1]] - p[i] for e in oe])
        total += m[i] * cost.value_and_grad(i, diffs)[0]
    return total


def _centered_and_jump(grid: SimplexGrid, values: np.ndarray, i: int, j: int):
    """Tangent derivative estimate and second-difference jump along (i, j).

    Central where both lattice neighbors exist, one-sided otherwise (the jump
    is zero there); zero in directions with no neighbor at all.
    """
    h = grid.spacing
    fwd = grid.step_index[:, grid.pair_id(i, j)]
    bwd = grid.step_index[:, grid.pair_id(j, i)]
    has_f, has_b = fwd >= 0, bwd >= 0
    vf = np.where(has_f, values[np.where(has_f, fwd, 0)], 0.0)
    vb = np.where(has_b, values[np.where(has_b, bwd, 0)], 0.0)
    centered = np.zeros_like(values)
    jump = np.zeros_like(values)
    both = has_f & has_b
    centered[both] = (vf[both] - vb[both]) / (2.0 * h)
    jump[both] = (vf[both] - 2.0 * values[both] + vb[both]) / h
    fo = has_f & ~has_b
    centered[fo] = (vf[fo] - values[fo]) / h
    bo = has_b & ~has_f
    centered[bo] = (values[bo] - vb[bo]) / h
    return centered, jump


def _edge_slopes(grid: SimplexGrid, graph: Graph, values: np.ndarray):
    """Per-edge tangent derivative rows (P, E) plus the dissipation jumps."""
    E = graph.edge_count
    P = grid.point_count
    slopes = np.zeros((P, E))
    jumps = np.zeros((P, E))
    for e, (s, t) in enumerate(graph.edges):
        slopes[:, e], jumps[:, e] = _centered_and_jump(grid, values, s, t)
    return slopes, jumps


def _tangent_gradient(grid: SimplexGrid, values: np.ndarray, i: int, j: int):
    """Second-order tangent derivative along (i, j) for field extraction.

    Central in the interior; three-point one-sided at the lattice boundary,
    degrading to two-point only where the second neighbor is also missing.
    """
    h = grid.spacing
    fwd = grid.step_index[:, grid.pair_id(i, j)]
    bwd = grid.step_index[:, grid.pair_id(j, i)]
    out = np.zeros_like(values)
    has_f, has_b = fwd >= 0, bwd >= 0
    vf = np.where(has_f, values[np.where(has_f, fwd, 0)], 0.0)
    vb = np.where(has_b, values[np.where(has_b, bwd, 0)], 0.0)
    both = has_f & has_b
    out[both] = (vf[both] - vb[both]) / (2.0 * h)
    fwd2 = np.where(has_f, grid.step_index[np.where(has_f, fwd, 0), grid.pair_id(i, j)], -1)
    bwd2 = np.where(has_b, grid.step_index[np.where(has_b, bwd, 0), grid.pair_id(j, i)], -1)
    fo = has_f & ~has_b
    fo2 = fo & (fwd2 >= 0)
    vf2 = values[np.where(fo2, fwd2, 0)]
    out[fo2] = (-3.0 * values[fo2] + 4.0 * vf[fo2] - vf2[fo2]) / (2.0 * h)
    fo1 = fo & (fwd2 < 0)
    out[fo1] = (vf[fo1] - values[fo1]) / h
    bo = has_b & ~has_f
    bo2 = bo & (bwd2 >= 0)
    vb2 = values[np.where(bo2, bwd2, 0)]
    out[bo2] = (3.0 * values[bo2] - 4.0 * vb[bo2] + vb2[bo2]) / (2.0 * h)
    bo1 = bo & (bwd2 < 0)
    out[bo1] = (values[bo1] - vb[bo1]) / h
    return out


def _aggregate_hamiltonian_rows(graph: Graph, cost, points: np.ndarray, slopes: np.ndarray):
    """Vectorized sum_i m_i H(i, .) and per-edge flow bounds m_i dH/dp_j."""
    P = points.shape[0]
    total = np.zeros(P)
    edge_flow = np.zeros((P, graph.edge_count))
    for i in range(graph.node_count):
        oe = graph.out_edges[i]
        if not oe:
            continue
        vals, grads = hamiltonian_batch(cost, i, slopes[:, list(oe)])
        total += points[:, i] * vals
        for pos, e in enumerate(oe):
            edge_flow[:, e] = points[:, i] * grads[:, pos]
    return total, edge_flow


def solve_planning_hj(
    graph: Graph,
    cost,
    F: Callable[[np.ndarray], float],
    G: Callable[[np.ndarray], float],
    simplex_grid: SimplexGrid,
    time_grid: TimeGrid,
):
    """Backward Lax-Friedrichs sweep of the planner equation.

    The dissipation coefficient per edge and point is the local transport
    speed m_i dH/dp_j at the current slopes, maximized over the point and its
    two lattice neighbors in that direction (a global coefficient smears the
    value enough to be visible in the planner payoff check). A step violating
    the stability bound dt <= h / (2 max_x sum_e alpha_e(x)) is split into
    sub-steps. Returns the field and a report of the sub-stepping activity.
    """
    N = graph.node_count
    if simplex_grid.n_nodes != N:
        raise ValueError("simplex grid and graph disagree on the node count")
    if N > MAX_PLANNING_NODES:
        raise ValueError(
            f"planning solve supports at most {MAX_PLANNING_NODES} nodes: the grid has "
            f"C(M+N-1, N-1) points and grows combinatorially with N (got N={N})"
        )
    K = time_grid.steps
    P = simplex_grid.point_count
    h = simplex_grid.spacing
    pts = simplex_grid.points
    F_vals = np.array([F(pts[p]) for p in range(P)])
    phi = np.empty((K + 1, P))
    phi[K] = [G(pts[p]) for p in range(P)]

    substeps_total = 0
    cfl_limited = 0
    max_alpha_sum = 0.0
    E = graph.edge_count
    for k in range(K - 1, -1, -1):
        current = phi[k + 1].copy()
        remaining = time_grid.dt
        parts = 0
        while remaining > 1e-15 * time_grid.dt:
            slopes, jumps = _edge_slopes(simplex_grid, graph, current)
            agg, edge_flow = _aggregate_hamiltonian_rows(graph, cost, pts, slopes)
            alphas = np.empty_like(edge_flow)
            for e, (s, t) in enumerate(graph.edges):
                fwd = simplex_grid.step_index[:, simplex_grid.pair_id(s, t)]
                bwd = simplex_grid.step_index[:, simplex_grid.pair_id(t, s)]
                a = edge_flow[:, e].copy()
                np.maximum(a, np.where(fwd >= 0, edge_flow[np.where(fwd >= 0, fwd, 0), e], 0.0), out=a)
                np.maximum(a, np.where(bwd >= 0, edge_flow[np.where(bwd >= 0, bwd, 0), e], 0.0), out=a)
                alphas[:, e] = a
            alpha_sum = float(alphas.sum(axis=1).max()) if E else 0.0
            max_alpha_sum = max(max_alpha_sum, alpha_sum)
            stable = h / (2.0 * alpha_sum) if alpha_sum > 0.0 else math.inf
            step = min(remaining, stable)
            dissipation = 0.5 * np.einsum("pe,pe->p", jumps, alphas) if E else 0.0
            current = current + step * (agg + F_vals + dissipation)
            if not np.all(np.isfinite(current)):
                raise RuntimeError(f"planning solve produced non-finite values at time index {k}")
            remaining -= step
            parts += 1
        substeps_total += parts
        if parts > 1:
            cfl_limited += 1
        phi[k] = current
    phi.setflags(write=False)
    field = SimplexField(grid=simplex_grid, time_grid=time_grid, values=phi)
    return field, PlanningReport(substeps_total, cfl_limited, max_alpha_sum)


def extract_master_fields(phi: SimplexField, graph: Graph) -> MasterField:
    """Edge differences U_j - U_i as tangent derivatives of Phi.

    Central differences along e_j - e_i, one-sided where the lattice ends.
    Only these differences are identifiable from on-simplex data; absolute
    node values carry a free common mode.
    """
    if phi.grid.resolution < 2:
        raise ValueError("resolution must be at least 2 for central tangent differences")
    K1, P = phi.values.shape
    du = np.empty((K1, P, graph.edge_count))
    for k in range(K1):
        for e, (s, t) in enumerate(graph.edges):
            du[k, :, e] = _tangent_gradient(phi.grid, phi.values[k], s, t)
    du.setflags(write=False)
    return MasterField(grid=phi.grid, time_grid=phi.time_grid, graph=graph, du=du)


def _spanning_paths(graph: Graph):
    """Signed edge-path matrix B with U = B @ du per connected component."""
    N, E = graph.node_count, graph.edge_count
    B = np.zeros((N, E))
    comp = -np.ones(N, dtype=int)
    components: list[list[int]] = []
    for root in range(N):
        if comp[root] >= 0:
            continue
        cid = len(components)
        components.append([root])
        comp[root] = cid
        stack = [root]
        while stack:
            x = stack.pop()
            for e in graph.out_edges[x]:
                t = graph.edges[e][1]
                if comp[t] < 0:
                    comp[t] = cid
                    components[cid].append(t)
                    B[t] = B[x]
                    B[t, e] += 1.0
                    stack.append(t)
            for e in graph.in_edges[x]:
                s = graph.edges[e][0]
                if comp[s] < 0:
                    comp[s] = cid
                    components[cid].append(s)
                    B[s] = B[x]
                    B[s, e] -= 1.0
                    stack.append(s)
    return B, components


def master_residual(graph: Graph, cost, coupling, master: MasterField) -> MasterResidualReport:
    """Discrete residual of the N gradient-field equations at interior points.

    Time derivatives are central; the advection term contracts the transport
    bracket against tangent differences of the reconstructed node fields (the
    bracket sums to zero across coordinates, so only tangent components
    enter). Node fields are fixed along a spanning tree from the stored edge
    differences; the gauge mode this leaves free is common to all N equations
    and is projected out of the reported residuals with weights m_i per
    connected component.
    """
    grid, tg = master.grid, master.time_grid
    if grid.resolution < 4:
        raise ValueError("master residual needs resolution >= 4")
    if tg.steps < 4:
        raise ValueError("master residual needs at least 4 time steps")
    N, P, K = graph.node_count, grid.point_count, tg.steps
    pts = grid.points
    B, components = _spanning_paths(graph)
    U = np.einsum("kpe,ne->kpn", master.du, B)

    f_vals = np.array([[coupling.f(i, pts[p]) for i in range(N)] for p in range(P)])
    interior = grid.interior
    residuals = np.full((K - 1, P, N), np.nan)
    for k in range(1, K):
        du_k = master.du[k]
        Ut = (U[k + 1] - U[k - 1]) / (2.0 * tg.dt)
        hvals = np.zeros((P, N))
        flows = np.zeros((P, graph.edge_count))
        for i in range(N):
            oe = graph.out_edges[i]
            if not oe:
                continue
            vals, grads = hamiltonian_batch(cost, i, du_k[:, list(oe)])
            hvals[:, i] = vals
            for pos, e in enumerate(oe):
                flows[:, e] = pts[:, i] * grads[:, pos]
        raw = np.empty((P, N))
        for i in range(N):
            adv = np.zeros(P)
            for e, (s, t) in enumerate(graph.edges):
                adv += flows[:, e] * _centered_and_jump(grid, U[k][:, i], s, t)[0]
            raw[:, i] = Ut[:, i] + hvals[:, i] + adv + f_vals[:, i]
        projected = raw.copy()
        for nodes in components:
            w = pts[:, nodes]
            wsum = w.sum(axis=1, keepdims=True)
            mean = np.where(wsum > 0.0, (w * raw[:, nodes]).sum(axis=1, keepdims=True) / np.maximum(wsum, 1e-300), 0.0)
            projected[:, nodes] = raw[:, nodes] - mean
        residuals[k - 1][interior] = projected[interior]
    body = residuals[:, interior, :]
    residuals.setflags(write=False)
    return MasterResidualReport(
        sup_residual=float(np.abs(body).max()) if body.size else 0.0,
        mean_residual=float(np.abs(body).mean()) if body.size else 0.0,
        residuals=residuals,
        interior_point_count=int(interior.sum()),
    )


def _simplex_cell(grid: SimplexGrid, m: np.ndarray):
    """Vertices and barycentric weights of the lattice cell containing m."""
    M = grid.resolution
    y = np.maximum(m, 0.0) * M
    k0 = np.floor(y + 1e-12).astype(int)
    k0 = np.minimum(k0, M)
    r = np.maximum(y - k0, 0.0)
    s = M - int(k0.sum())
    if s <= 0:
        key = tuple(int(x) for x in k0)
        return [grid_index(grid, key)], [1.0]
    n = grid.n_nodes
    if s == 1:
        verts, weights = [], []
        for i in range(n):
            comp = k0.copy()
            comp[i] += 1
            verts.append(grid_index(grid, tuple(comp)))
            weights.append(float(r[i]))
    elif s == n - 1:
        verts, weights = [], []
        for i in range(n):
            comp = k0 + 1
            comp[i] -= 1
            verts.append(grid_index(grid, tuple(comp)))
            weights.append(float(1.0 - r[i]))
    else:
        raise RuntimeError(f"unexpected lattice offset {s} for point {m}")
    total = sum(weights)
    if total <= 0.0:
        weights = [1.0 / n] * n
        total = 1.0
    return verts, [w / total for w in weights]


def grid_index(grid: SimplexGrid, key) -> int:
    return grid.index_map[tuple(int(x) for x in key)]


def interpolate_field(field_values: np.ndarray, grid: SimplexGrid, tg: TimeGrid, t: float, m: np.ndarray):
    """Simplicial-linear interpolation in m, linear in t.

    ``field_values`` has shape (K+1, P) or (K+1, P, C); returns a scalar or
    a length-C vector.
    """
    K = tg.steps
    pos = min(max(t / tg.dt, 0.0), float(K))
    k = min(int(pos), K - 1)
    w = pos - k
    verts, weights = _simplex_cell(grid, np.asarray(m, float))
    lo = sum(wt * field_values[k, v] for v, wt in zip(verts, weights))
    hi = sum(wt * field_values[k + 1, v] for v, wt in zip(verts, weights))
    return (1.0 - w) * lo + w * hi


def _rates_from_du(graph: Graph, cost, du_row: np.ndarray) -> np.ndarray:
    rates = np.zeros(graph.edge_count)
    for i in range(graph.node_count):
        oe = graph.out_edges[i]
        if not oe:
            continue
        grad = cost.value_and_grad(i, du_row[list(oe)])[1]
        for pos, e in enumerate(oe):
            rates[e] = grad[pos]
    return rates


def characteristics_flow(graph: Graph, cost, phi: SimplexField, m0, time_grid: TimeGrid):
    """Macroscopic trajectory driven by rates read off the field gradient.

    The edge difference fields of Phi are interpolated (simplicial-linear in
    m, linear in t) along the flow; rates are the Hamiltonian gradients at
    those differences. Returns the trajectory and the control sampled at the
    grid nodes along it.
    """
    master = extract_master_fields(phi, graph)
    grid = phi.grid
    h = grid.spacing
    K = time_grid.steps
    dt = time_grid.dt
    N = graph.node_count

    def rates_at(t: float, m: np.ndarray) -> np.ndarray:
        if float(m.min()) < -h:
            raise RuntimeError(
                f"characteristics left the grid hull: coordinate {m.min():.3e} at t={t:.6f}"
            )
        mq = np.asarray(project_to_simplex(m)) if m.min() < 0.0 else m
        du_here = interpolate_field(master.du, grid, phi.time_grid, t, mq)
        return _rates_from_du(graph, cost, du_here)

    def rhs(t: float, m: np.ndarray) -> np.ndarray:
        lam = rates_at(t, m)
        dm = np.zeros(N)
        for e, (s, tgt) in enumerate(graph.edges):
            flow = lam[e] * m[s]
            dm[s] -= flow
            dm[tgt] += flow
        return dm

    m_traj = np.empty((K + 1, N))
    rates = np.empty((K + 1, graph.edge_count))
    m = np.asarray(m0, float)
    for k in range(K + 1):
        m_traj[k] = m
        rates[k] = rates_at(k * dt, m)
        if k == K:
            break
        t = k * dt
        k1 = rhs(t, m)
        k2 = rhs(t + 0.5 * dt, m + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, m + 0.5 * dt * k2)
        k4 = rhs(t + dt, m + dt * k3)
        m = m + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if m.min() < -1e-9:
            raise RuntimeError(
                f"characteristics produced coordinate {m.min():.3e} at step {k + 1}"
            )
        if m.min() < 0.0 or abs(math.fsum(m.tolist()) - 1.0) > 1e-12:
            m = np.asarray(project_to_simplex(m))
    m_traj.setflags(write=False)
    rates.setflags(write=False)
    control = ControlField(grid=time_grid, graph=graph, rates=rates)
    return m_traj, control


def planner_payoff(
    graph: Graph,
    cost,
    F: Callable[[np.ndarray], float],
    G: Callable[[np.ndarray], float],
    rate_fn: Callable[[float, np.ndarray], np.ndarray],
    m0,
    time_grid: TimeGrid,
) -> float:
    """Aggregate payoff of a planner control: running F minus occupancy-weighted
    costs, plus the terminal potential, integrated with RK4."""
    N = graph.node_count
    K, dt = time_grid.steps, time_grid.dt

    def rhs(t, state):
        m = state[:N]
        lam = rate_fn(t, m)
        dm = np.zeros(N)
        run = F(m)
        for i in range(N):
            oe = graph.out_edges[i]
            if oe:
                run -= cost.cost(i, lam[list(oe)]) * m[i]
        for e, (s, tgt) in enumerate(graph.edges):
            flow = lam[e] * m[s]
            dm[s] -= flow
            dm[tgt] += flow
        return np.append(dm, run)

    state = np.append(np.asarray(m0, float), 0.0)
    for k in range(K):
        t = k * dt
        k1 = rhs(t, state)
        k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2)
        k4 = rhs(t + dt, state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return float(state[N] + G(state[:N]))


def default_planner_trials(graph: Graph, count: int = 20, seed: int = 42):
    """Open-loop trial controls: constant fields, single-edge pushes, and
    seeded piecewise-constant fields on four equal windows."""
    E = graph.edge_count
    trials: list[Callable[[float, np.ndarray], np.ndarray]] = []

    def constant(rates):
        r = np.asarray(rates, float)
        return lambda t, m: r

    for level in (0.0, 0.1, 0.5, 1.0, 2.0, 5.0):
        trials.append(constant(np.full(E, level)))
    for e in range(E):
        for level in (1.0, 3.0):
            r = np.zeros(E)
            r[e] = level
            trials.append(constant(r))
    children = np.random.SeedSequence(seed).spawn(max(0, count - len(trials)))
    for child in children:
        rng = np.random.default_rng(child)
        table = rng.uniform(0.0, 2.0, size=(4, E))

        def piecewise(tab):
            def fn(t, m, _tab=tab):
                return _tab[min(3, int(4 * t))] if t < 1.0 else _tab[3]

            return fn

        trials.append(piecewise(table))
    return trials


def check_value_function(
    graph: Graph,
    cost,
    F: Callable[[np.ndarray], float],
    G: Callable[[np.ndarray], float],
    phi: SimplexField,
    m0,
    time_grid: TimeGrid,
    trials: Optional[Sequence[Callable]] = None,
    tol: float = 5e-3,
) -> ValueCheckReport:
    """No trial planner control should beat Phi(0, m0); the characteristics
    control should attain it within scheme tolerance."""
    m0 = np.asarray(m0, float)
    if trials is None:
        trials = default_planner_trials(graph)
    horizon = time_grid.horizon

    def scaled(fn):
        return lambda t, m: fn(t / horizon, m)

    trial_values = np.array(
        [planner_payoff(graph, cost, F, G, scaled(fn), m0, time_grid) for fn in trials]
    )
    master = extract_master_fields(phi, graph)

    def char_rates(t, m):
        mq = np.asarray(project_to_simplex(m)) if m.min() < 0.0 else m
        du_here = interpolate_field(master.du, phi.grid, phi.time_grid, t, mq)
        return _rates_from_du(graph, cost, du_here)

    char_value = planner_payoff(graph, cost, F, G, char_rates, m0, time_grid)
    phi0 = float(interpolate_field(phi.values, phi.grid, phi.time_grid, 0.0, m0))
    passed = bool(
        np.all(trial_values <= phi0 + tol) and abs(char_value - phi0) <= tol
    )
    return ValueCheckReport(
        phi0=phi0,
        characteristics_value=char_value,
        trial_values=trial_values,
        max_trial_value=float(trial_values.max()),
        tolerance=tol,
        passed=passed,
    )
