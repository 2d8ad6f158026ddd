"""Command-line entry point.

    graphmfg <subcommand> --config <path> [--out <dir>] [--seed <u64>]

Subcommands: solve-mfg, solve-planning, verify-nash, check-master, compare,
check-monotonicity. Exit status is 0 on success, 2 when a solve did not
converge, 1 on any error. Every run writes a manifest JSON next to its
artifacts; outputs are deterministic given config and seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from . import io as gio
from .config import ConfigError, RunConfig, build_coupling, build_cost, load_config
from .planning import (
    build_simplex_grid,
    characteristics_flow,
    extract_master_fields,
    master_residual,
    solve_planning_hj,
)
from .solver import extract_control, mfg_fixed_point
from .verification import check_monotonicity, default_deviations, nash_gap
from .solver import TrajectoryPair

SUBCOMMANDS = (
    "solve-mfg",
    "solve-planning",
    "verify-nash",
    "check-master",
    "compare",
    "check-monotonicity",
)

MFG_TRAJECTORY = "mfg_trajectory.csv"
CHARACTERISTICS = "characteristics.csv"
PLANNING_PHI = "planning_phi.csv"
MASTER_FIELDS = "master_fields.csv"


def _threads_setting() -> str:
    raw = os.environ.get("GRAPHMFG_THREADS", "0")
    try:
        v = int(raw)
        if v < 0:
            raise ValueError
    except ValueError:
        raise ConfigError(f"GRAPHMFG_THREADS must be a nonnegative integer, got {raw!r}")
    return "auto" if v == 0 else str(v)


def _problem(config: RunConfig):
    graph = config.build_graph()
    return graph, build_cost(config, graph), build_coupling(config, graph)


def _finish(out_dir: str, subcommand: str, config: RunConfig, timings: dict):
    manifest = gio.manifest_dict(subcommand, config, timings, _threads_setting())
    gio.write_json(os.path.join(out_dir, f"manifest_{subcommand}.json"), manifest)


def _cmd_solve_mfg(config: RunConfig, out_dir: str) -> int:
    graph, cost, coupling = _problem(config)
    grid = config.build_time_grid()
    t0 = time.monotonic()
    solution = mfg_fixed_point(
        graph, cost, coupling, config.build_m0(), grid,
        damping=config.damping, tol=config.tol, max_iter=config.max_iter,
        initial_guess=config.initial_guess,
    )
    wall_ms = 1000.0 * (time.monotonic() - t0)
    gio.write_trajectory_csv(
        os.path.join(out_dir, MFG_TRAJECTORY), graph, solution.trajectory, solution.control
    )
    gio.write_json(os.path.join(out_dir, "mfg_report.json"), {
        "iterations": solution.iterations,
        "residual": solution.residual,
        "converged": solution.converged,
        "wall_time_ms": wall_ms,
        "apriori_bound": solution.apriori_bound,
        "apriori_max_u": solution.max_abs_u,
    })
    _finish(out_dir, "solve-mfg", config, {"solve": wall_ms})
    return 0 if solution.converged else 2


def _require_planning(config: RunConfig):
    if not config.planning_enabled:
        raise ConfigError("config.planning.enabled must be true for this subcommand")


def _cmd_solve_planning(config: RunConfig, out_dir: str) -> int:
    _require_planning(config)
    graph, cost, coupling = _problem(config)
    grid = config.build_time_grid()
    sgrid = build_simplex_grid(graph.node_count, config.planning_resolution)
    t0 = time.monotonic()
    field, report = solve_planning_hj(graph, cost, coupling.F, coupling.G, sgrid, grid)
    solve_ms = 1000.0 * (time.monotonic() - t0)
    master = extract_master_fields(field, graph)
    t1 = time.monotonic()
    m_traj, control = characteristics_flow(graph, cost, field, config.build_m0(), grid)
    flow_ms = 1000.0 * (time.monotonic() - t1)
    gio.write_phi_csv(os.path.join(out_dir, PLANNING_PHI), field)
    gio.write_master_csv(os.path.join(out_dir, MASTER_FIELDS), master)
    gio.write_distribution_csv(
        os.path.join(out_dir, CHARACTERISTICS), graph, grid, m_traj, control
    )
    gio.write_json(os.path.join(out_dir, "planning_report.json"), {
        "substeps_total": report.substeps_total,
        "cfl_limited_steps": report.cfl_limited_steps,
        "max_rate_bound": report.max_rate_bound,
        "wall_time_ms": solve_ms + flow_ms,
    })
    _finish(out_dir, "solve-planning", config, {"solve": solve_ms, "characteristics": flow_ms})
    return 0


def _cmd_verify_nash(config: RunConfig, out_dir: str) -> int:
    graph, cost, coupling = _problem(config)
    grid = config.build_time_grid()
    path = os.path.join(out_dir, MFG_TRAJECTORY)
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing solver output {path}; run solve-mfg first")
    t0 = time.monotonic()
    _, u, m, rates = gio.read_trajectory_csv(path, graph)
    if u.shape[0] != grid.steps + 1:
        raise ValueError(
            f"{path}: trajectory has {u.shape[0]} time rows, config expects {grid.steps + 1}"
        )
    pair = TrajectoryPair(grid=grid, u=u, m=m)
    control = extract_control(graph, cost, u, grid)
    deviations = default_deviations(
        graph, control, grid,
        epsilons=config.verify_epsilons,
        window_levels=config.verify_window_levels,
        random_count=config.verify_random_deviations,
        seed=config.seed,
        rate_bound=config.verify_rate_bound,
    )
    report = nash_gap(graph, cost, coupling, pair, deviations, candidate_control=control)
    wall_ms = 1000.0 * (time.monotonic() - t0)
    gio.write_json(os.path.join(out_dir, "nash_report.json"), {
        "max_gap": report.max_gap,
        "worst_node": report.worst_node + 1,
        "worst_deviation": report.worst_deviation,
        "deviation_count": report.deviation_count,
        "oracle_error": report.oracle_error,
    })
    _finish(out_dir, "verify-nash", config, {"verify": wall_ms})
    return 0


def _cmd_check_master(config: RunConfig, out_dir: str) -> int:
    _require_planning(config)
    graph, cost, coupling = _problem(config)
    grid = config.build_time_grid()
    sgrid = build_simplex_grid(graph.node_count, config.planning_resolution)
    t0 = time.monotonic()
    field, _ = solve_planning_hj(graph, cost, coupling.F, coupling.G, sgrid, grid)
    master = extract_master_fields(field, graph)
    report = master_residual(graph, cost, coupling, master)
    wall_ms = 1000.0 * (time.monotonic() - t0)
    gio.write_json(os.path.join(out_dir, "master_report.json"), {
        "sup_residual": report.sup_residual,
        "mean_residual": report.mean_residual,
        "interior_point_count": report.interior_point_count,
        "resolution": config.planning_resolution,
        "time_steps": config.time_steps,
    })
    _finish(out_dir, "check-master", config, {"check": wall_ms})
    return 0


def _cmd_compare(config: RunConfig, out_dir: str) -> int:
    graph, _, _ = _problem(config)
    for name in (MFG_TRAJECTORY, CHARACTERISTICS):
        path = os.path.join(out_dir, name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing prerequisite output {path}")
    t_mfg, _, m_mfg, _ = gio.read_trajectory_csv(os.path.join(out_dir, MFG_TRAJECTORY), graph)
    t_chr, m_chr = gio.read_distribution_csv(os.path.join(out_dir, CHARACTERISTICS), graph)
    if t_mfg.shape != t_chr.shape or np.abs(t_mfg - t_chr).max() > 1e-12:
        raise ValueError("trajectory files do not share a time grid")
    gap = np.abs(m_mfg - m_chr)
    k, i = np.unravel_index(int(np.argmax(gap)), gap.shape)
    gio.write_json(os.path.join(out_dir, "compare_report.json"), {
        "sup_gap": float(gap[k, i]),
        "at_time": float(t_mfg[k]),
        "at_node": int(i) + 1,
    })
    _finish(out_dir, "compare", config, {})
    return 0


def _cmd_check_monotonicity(config: RunConfig, out_dir: str) -> int:
    graph, _, coupling = _problem(config)
    t0 = time.monotonic()
    report = check_monotonicity(
        coupling, graph.node_count, sample_count=10_000, rng_seed=config.seed
    )
    wall_ms = 1000.0 * (time.monotonic() - t0)
    doc = {
        "sample_count": report.sample_count,
        "f_verdict": report.f_verdict,
        "g_verdict": report.g_verdict,
        "f_worst_value": report.f_worst_value,
        "g_worst_value": report.g_worst_value,
        "f_margin": report.f_margin,
        "g_margin": report.g_margin,
        "violations": report.violations,
    }
    if report.g_verdict == "degenerate":
        doc["note"] = "degenerate: criterion for g not satisfied strictly"
    gio.write_json(os.path.join(out_dir, "monotonicity_report.json"), doc)
    _finish(out_dir, "check-monotonicity", config, {"check": wall_ms})
    return 0


_HANDLERS = {
    "solve-mfg": _cmd_solve_mfg,
    "solve-planning": _cmd_solve_planning,
    "verify-nash": _cmd_verify_nash,
    "check-master": _cmd_check_master,
    "compare": _cmd_compare,
    "check-monotonicity": _cmd_check_monotonicity,
}


def run(subcommand: str, config: RunConfig, out_dir=None, seed=None) -> int:
    """Dispatch one subcommand; returns the process exit status."""
    if subcommand not in _HANDLERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    target = out_dir if out_dir is not None else config.output_dir
    os.makedirs(target, exist_ok=True)
    return _HANDLERS[subcommand](config, target)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="graphmfg",
        description="Mean field game solver and verification toolkit on directed graphs",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return run(args.subcommand, config, out_dir=args.out, seed=args.seed)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"graphmfg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
