"""Artifact emission: deterministic CSV/JSON files written atomically.

All floating-point output uses 17 significant digits so repeated runs with
the same config and seed are bit-identical and regression-diffable.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import platform
import sys
from typing import Optional

import numpy as np

from .graph import Graph, TimeGrid
from .solver import ControlField, TrajectoryPair

__all__ = [
    "fmt",
    "atomic_write_text",
    "write_json",
    "sha256_file",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_distribution_csv",
    "read_distribution_csv",
    "write_phi_csv",
    "write_master_csv",
    "manifest_dict",
]


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def atomic_write_text(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: str, doc: dict):
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _csv_text(header: list, rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _lambda_header(graph: Graph) -> list:
    return [f"lambda_out{j + 1}" for j in range(graph.max_out_degree)]


def _rate_cells(graph: Graph, rates_row: np.ndarray, node: int) -> list:
    cells = [fmt(rates_row[e]) for e in graph.out_edges[node]]
    cells.extend([""] * (graph.max_out_degree - len(cells)))
    return cells


def write_trajectory_csv(path: str, graph: Graph, pair: TrajectoryPair, control: ControlField):
    """One row per (t_k, node): t,node,u,m,lambda_out... (rates in edge order)."""
    t = pair.grid.nodes
    rows = []
    for k in range(pair.grid.steps + 1):
        for i in range(graph.node_count):
            rows.append(
                [fmt(t[k]), str(i + 1), fmt(pair.u[k, i]), fmt(pair.m[k, i])]
                + _rate_cells(graph, control.rates[k], i)
            )
    atomic_write_text(path, _csv_text(["t", "node", "u", "m", *_lambda_header(graph)], rows))


def read_trajectory_csv(path: str, graph: Graph):
    """Inverse of :func:`write_trajectory_csv`; returns (t, u, m, rates)."""
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["t", "node", "u", "m"]:
            raise ValueError(f"{path}: unexpected trajectory header {header[:4]}")
        records = list(reader)
    N = graph.node_count
    if len(records) % N != 0:
        raise ValueError(f"{path}: row count {len(records)} is not a multiple of N={N}")
    K1 = len(records) // N
    t = np.empty(K1)
    u = np.empty((K1, N))
    m = np.empty((K1, N))
    rates = np.zeros((K1, graph.edge_count))
    for r, rec in enumerate(records):
        k, i = divmod(r, N)
        t[k] = float(rec[0])
        if int(rec[1]) != i + 1:
            raise ValueError(f"{path}: unexpected node order at row {r + 2}")
        u[k, i] = float(rec[2])
        m[k, i] = float(rec[3])
        for pos, e in enumerate(graph.out_edges[i]):
            rates[k, e] = float(rec[4 + pos])
    return t, u, m, rates


def write_distribution_csv(path: str, graph: Graph, grid: TimeGrid, m: np.ndarray,
                           control: Optional[ControlField] = None):
    """One row per (t_k, node): t,node,m,lambda_out... (no value column)."""
    t = grid.nodes
    rows = []
    for k in range(grid.steps + 1):
        for i in range(graph.node_count):
            cells = [fmt(t[k]), str(i + 1), fmt(m[k, i])]
            if control is not None:
                cells += _rate_cells(graph, control.rates[k], i)
            rows.append(cells)
    header = ["t", "node", "m"] + (_lambda_header(graph) if control is not None else [])
    atomic_write_text(path, _csv_text(header, rows))


def read_distribution_csv(path: str, graph: Graph):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["t", "node", "m"]:
            raise ValueError(f"{path}: unexpected distribution header {header[:3]}")
        records = list(reader)
    N = graph.node_count
    K1 = len(records) // N
    t = np.empty(K1)
    m = np.empty((K1, N))
    for r, rec in enumerate(records):
        k, i = divmod(r, N)
        t[k] = float(rec[0])
        m[k, i] = float(rec[2])
    return t, m


def write_phi_csv(path: str, field):
    """Planner value slices: t,m1,...,mN,phi."""
    grid, tg = field.grid, field.time_grid
    t = tg.nodes
    header = ["t"] + [f"m{i + 1}" for i in range(grid.n_nodes)] + ["phi"]
    rows = []
    for k in range(tg.steps + 1):
        for p in range(grid.point_count):
            rows.append(
                [fmt(t[k])]
                + [fmt(x) for x in grid.points[p]]
                + [fmt(field.values[k, p])]
            )
    atomic_write_text(path, _csv_text(header, rows))


def write_master_csv(path: str, master):
    """Edge difference fields: t,m1,...,mN,edge,source,target,dU."""
    grid, tg, graph = master.grid, master.time_grid, master.graph
    t = tg.nodes
    header = ["t"] + [f"m{i + 1}" for i in range(grid.n_nodes)] + ["edge", "source", "target", "dU"]
    rows = []
    for k in range(tg.steps + 1):
        for p in range(grid.point_count):
            for e, (s, tgt) in enumerate(graph.edges):
                rows.append(
                    [fmt(t[k])]
                    + [fmt(x) for x in grid.points[p]]
                    + [str(e + 1), str(s + 1), str(tgt + 1), fmt(master.du[k, p, e])]
                )
    atomic_write_text(path, _csv_text(header, rows))


def manifest_dict(subcommand: str, config, timings_ms: dict, threads: str) -> dict:
    from . import __version__

    config_doc = config.to_dict()
    blob = json.dumps(config_doc, sort_keys=True).encode()
    return {
        "subcommand": subcommand,
        "config": config_doc,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seed": config.seed,
        "threads": threads,
        "versions": {
            "graphmfg": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "timings_ms": timings_ms,
    }
