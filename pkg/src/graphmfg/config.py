"""Run configuration: a single strictly-validated JSON document.

Unknown keys are rejected with their path, defaults are materialized at
parse time, and the materialized document round-trips through
``RunConfig.to_dict``. Nodes and permutations are 1-indexed here; the
builders below translate to the package's internal 0-indexed world.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coupling import Coupling, builtin_coupling
from .costs import SeparablePower, SeparableQuadratic
from .graph import Graph, TimeGrid, build_graph, graph_from_json_dict, simplex_point

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config",
           "build_cost", "build_coupling"]

MAX_PLANNING_NODES = 3

DEFAULTS = {
    "damping": 0.5,
    "tol": 1e-8,
    "time_steps": 400,
    "resolution": 32,
    "seed": 42,
    "max_iter": 200,
    "domain_margin": 0.05,
}


class ConfigError(ValueError):
    pass


def _require_keys(doc: dict, allowed: set, path: str):
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}")


def _get(doc: dict, key: str, path: str, required: bool = True, default=None):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}: missing required key")
        return default
    return doc[key]


@dataclass(frozen=True)
class RunConfig:
    graph_nodes: int
    graph_edges: tuple
    cost_type: str
    cost_exponent: Optional[float]
    cost_weights: tuple
    coupling_family: str
    coupling_a: float
    coupling_b: float
    coupling_c: float
    coupling_sigma: Optional[tuple]
    horizon: float
    time_steps: int
    initial_distribution: tuple
    domain_margin: float
    damping: float
    tol: float
    max_iter: int
    initial_guess: str
    planning_enabled: bool
    planning_resolution: int
    verify_epsilons: tuple
    verify_window_levels: int
    verify_random_deviations: int
    verify_rate_bound: Optional[float]
    seed: int
    output_dir: str

    def to_dict(self) -> dict:
        doc = {
            "graph": {"nodes": self.graph_nodes,
                      "edges": [list(e) for e in self.graph_edges]},
            "cost": {"type": self.cost_type,
                     "weights": {f"{s}->{t}": w for (s, t, w) in self.cost_weights}},
            "coupling": {"family": self.coupling_family,
                         "a": self.coupling_a, "b": self.coupling_b},
            "horizon": self.horizon,
            "time_steps": self.time_steps,
            "initial_distribution": list(self.initial_distribution),
            "domain_margin": self.domain_margin,
            "solver": {"damping": self.damping, "tol": self.tol,
                       "max_iter": self.max_iter, "initial_guess": self.initial_guess},
            "planning": {"enabled": self.planning_enabled,
                         "resolution": self.planning_resolution},
            "verification": {"epsilons": list(self.verify_epsilons),
                             "window_levels": self.verify_window_levels,
                             "random_deviations": self.verify_random_deviations,
                             "rate_bound": self.verify_rate_bound,
                             "rng_seed": self.seed},
            "output_dir": self.output_dir,
        }
        if self.cost_type == "power":
            doc["cost"]["exponent"] = self.cost_exponent
        if self.coupling_family == "affine_mix":
            doc["coupling"]["c"] = self.coupling_c
            doc["coupling"]["sigma"] = list(self.coupling_sigma)
        return doc

    def build_graph(self) -> Graph:
        return build_graph([tuple(e) for e in self.graph_edges], self.graph_nodes)

    def build_time_grid(self) -> TimeGrid:
        return TimeGrid(horizon=self.horizon, steps=self.time_steps)

    def build_m0(self) -> np.ndarray:
        return simplex_point(self.initial_distribution)


def parse_config(doc, base_dir: str = ".") -> RunConfig:
    """Validate a config document (dict or JSON text) into a RunConfig."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _require_keys(doc, {"graph", "cost", "coupling", "horizon", "time_steps",
                        "initial_distribution", "domain_margin", "solver",
                        "planning", "verification", "output_dir"}, "config")

    # graph: inline or file reference
    gdoc = _get(doc, "graph", "config")
    if not isinstance(gdoc, dict):
        raise ConfigError("config.graph: must be an object")
    if "path" in gdoc:
        _require_keys(gdoc, {"path"}, "config.graph")
        path = os.path.join(base_dir, gdoc["path"])
        if not os.path.exists(path):
            raise ConfigError(f"config.graph.path: file {path} does not exist")
        with open(path) as fh:
            try:
                gdoc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config.graph.path: invalid JSON in {path}: {exc}") from exc
    _require_keys(gdoc, {"nodes", "edges"}, "config.graph")
    try:
        graph = graph_from_json_dict({"nodes": gdoc["nodes"], "edges": gdoc["edges"]})
    except ValueError as exc:
        raise ConfigError(f"config.graph: {exc}") from exc
    n = graph.node_count
    edges = tuple((s + 1, t + 1) for s, t in graph.edges)

    # cost
    cdoc = _get(doc, "cost", "config", required=False, default={"type": "quadratic"})
    _require_keys(cdoc, {"type", "exponent", "weights"}, "config.cost")
    ctype = _get(cdoc, "type", "config.cost")
    if ctype not in ("quadratic", "power"):
        raise ConfigError(f"config.cost.type: must be 'quadratic' or 'power', got {ctype!r}")
    exponent = None
    if ctype == "power":
        exponent = float(_get(cdoc, "exponent", "config.cost"))
        if not exponent > 1.0:
            raise ConfigError(f"config.cost.exponent: must be > 1, got {exponent}")
    elif "exponent" in cdoc:
        raise ConfigError("config.cost.exponent: only meaningful for type 'power'")
    wdoc = cdoc.get("weights", {})
    if not isinstance(wdoc, dict):
        raise ConfigError("config.cost.weights: must be an object")
    edge_set = {e: k for k, e in enumerate(edges)}
    weights = [1.0] * len(edges)
    for key, value in wdoc.items():
        try:
            s_str, t_str = key.split("->")
            st = (int(s_str), int(t_str))
        except ValueError as exc:
            raise ConfigError(f"config.cost.weights.{key}: key must look like '1->2'") from exc
        if st not in edge_set:
            raise ConfigError(f"config.cost.weights.{key}: no such edge")
        w = float(value)
        if not (w > 0.0 and math.isfinite(w)):
            raise ConfigError(f"config.cost.weights.{key}: weight must be finite and > 0")
        weights[edge_set[st]] = w
    weight_list = tuple((s, t, weights[k]) for k, (s, t) in enumerate(edges))

    # coupling
    pdoc = _get(doc, "coupling", "config")
    _require_keys(pdoc, {"family", "a", "b", "c", "sigma"}, "config.coupling")
    family = _get(pdoc, "family", "config.coupling")
    if family not in ("zero", "crowd_aversion", "crowd_seeking", "affine_mix"):
        raise ConfigError(f"config.coupling.family: unknown family {family!r}")
    a = float(pdoc.get("a", 1.0))
    b = float(pdoc.get("b", 0.0))
    c = float(pdoc.get("c", 0.0))
    for label, v in (("a", a), ("b", b), ("c", c)):
        if not (v >= 0.0 and math.isfinite(v)):
            raise ConfigError(f"config.coupling.{label}: must be finite and >= 0")
    sigma = None
    if family == "affine_mix":
        sig = pdoc.get("sigma", [((i + 1) % n) + 1 for i in range(n)])
        sigma = tuple(int(x) for x in sig)
        if sorted(sigma) != list(range(1, n + 1)):
            raise ConfigError(f"config.coupling.sigma: must be a permutation of 1..{n}")
    else:
        for bad in ("c", "sigma"):
            if bad in pdoc:
                raise ConfigError(f"config.coupling.{bad}: only meaningful for affine_mix")

    # scalar blocks
    horizon = float(_get(doc, "horizon", "config"))
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise ConfigError(f"config.horizon: must be positive and finite, got {horizon}")
    time_steps = _get(doc, "time_steps", "config", required=False, default=DEFAULTS["time_steps"])
    if not isinstance(time_steps, int) or time_steps < 1:
        raise ConfigError(f"config.time_steps: must be an integer >= 1, got {time_steps!r}")

    m0_doc = _get(doc, "initial_distribution", "config", required=False,
                  default=[1.0 / n] * n)
    try:
        m0 = simplex_point(m0_doc)
    except ValueError as exc:
        raise ConfigError(f"config.initial_distribution: {exc}") from exc
    if m0.size != n:
        raise ConfigError(
            f"config.initial_distribution: expected {n} coordinates, got {m0.size}")

    margin = float(_get(doc, "domain_margin", "config", required=False,
                        default=DEFAULTS["domain_margin"]))
    if not (margin >= 0.0 and math.isfinite(margin)):
        raise ConfigError(f"config.domain_margin: must be finite and >= 0")

    sdoc = _get(doc, "solver", "config", required=False, default={})
    _require_keys(sdoc, {"damping", "tol", "max_iter", "initial_guess"}, "config.solver")
    damping = float(sdoc.get("damping", DEFAULTS["damping"]))
    if not (0.0 < damping <= 1.0):
        raise ConfigError(f"config.solver.damping: damping must lie in (0, 1], got {damping}")
    tol = float(sdoc.get("tol", DEFAULTS["tol"]))
    if not (tol > 0.0 and math.isfinite(tol)):
        raise ConfigError(f"config.solver.tol: must be positive, got {tol}")
    max_iter = sdoc.get("max_iter", DEFAULTS["max_iter"])
    if not isinstance(max_iter, int) or max_iter < 1:
        raise ConfigError(f"config.solver.max_iter: must be an integer >= 1, got {max_iter!r}")
    guess = sdoc.get("initial_guess", "constant")
    if guess not in ("constant", "uniform"):
        raise ConfigError(f"config.solver.initial_guess: must be 'constant' or 'uniform'")

    pldoc = _get(doc, "planning", "config", required=False, default={})
    _require_keys(pldoc, {"enabled", "resolution"}, "config.planning")
    planning_enabled = bool(pldoc.get("enabled", False))
    resolution = pldoc.get("resolution", DEFAULTS["resolution"])
    if not isinstance(resolution, int) or resolution < 1:
        raise ConfigError(f"config.planning.resolution: must be an integer >= 1")
    if planning_enabled:
        if n > MAX_PLANNING_NODES:
            raise ConfigError(
                f"config.planning.enabled: the planning solve is limited to "
                f"N <= {MAX_PLANNING_NODES} nodes (grid size grows as C(M+N-1, N-1)); "
                f"this graph has N={n}")
        if family == "affine_mix":
            raise ConfigError(
                "config.planning.enabled: coupling family 'affine_mix' declares no "
                "potentials; planning needs a potential pair")

    vdoc = _get(doc, "verification", "config", required=False, default={})
    _require_keys(vdoc, {"epsilons", "window_levels", "random_deviations",
                         "rate_bound", "rng_seed"}, "config.verification")
    epsilons = tuple(float(e) for e in vdoc.get("epsilons", [0.1, 0.5]))
    if not epsilons or any(not (e > 0.0 and math.isfinite(e)) for e in epsilons):
        raise ConfigError("config.verification.epsilons: must be positive numbers")
    window_levels = vdoc.get("window_levels", 3)
    if not isinstance(window_levels, int) or window_levels < 1:
        raise ConfigError("config.verification.window_levels: must be an integer >= 1")
    random_deviations = vdoc.get("random_deviations", 20)
    if not isinstance(random_deviations, int) or random_deviations < 0:
        raise ConfigError("config.verification.random_deviations: must be an integer >= 0")
    rate_bound = vdoc.get("rate_bound", None)
    if rate_bound is not None:
        rate_bound = float(rate_bound)
        if not (rate_bound > 0.0 and math.isfinite(rate_bound)):
            raise ConfigError("config.verification.rate_bound: must be positive")
    seed = vdoc.get("rng_seed", DEFAULTS["seed"])
    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        raise ConfigError("config.verification.rng_seed: must be an unsigned 64-bit integer")

    output_dir = _get(doc, "output_dir", "config", required=False, default="out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("config.output_dir: must be a non-empty string")

    return RunConfig(
        graph_nodes=n,
        graph_edges=edges,
        cost_type=ctype,
        cost_exponent=exponent,
        cost_weights=weight_list,
        coupling_family=family,
        coupling_a=a,
        coupling_b=b,
        coupling_c=c,
        coupling_sigma=sigma,
        horizon=horizon,
        time_steps=time_steps,
        initial_distribution=tuple(float(x) for x in m0),
        domain_margin=margin,
        damping=damping,
        tol=tol,
        max_iter=max_iter,
        initial_guess=guess,
        planning_enabled=planning_enabled,
        planning_resolution=resolution,
        verify_epsilons=epsilons,
        verify_window_levels=window_levels,
        verify_random_deviations=random_deviations,
        verify_rate_bound=rate_bound,
        seed=seed,
        output_dir=output_dir,
    )


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def build_cost(config: RunConfig, graph: Graph):
    weights = np.array([w for (_, _, w) in config.cost_weights])
    if config.cost_type == "quadratic":
        return SeparableQuadratic(graph, weights)
    return SeparablePower(graph, config.cost_exponent, weights)


def build_coupling(config: RunConfig, graph: Graph) -> Coupling:
    sigma0 = None
    if config.coupling_sigma is not None:
        sigma0 = [s - 1 for s in config.coupling_sigma]
    return builtin_coupling(
        config.coupling_family,
        graph.node_count,
        a=config.coupling_a,
        b=config.coupling_b,
        c=config.coupling_c,
        sigma=sigma0,
    )
