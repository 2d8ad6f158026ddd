import json
import os

import numpy as np
import pytest

from graphmfg import ConfigError, load_config, parse_config
from graphmfg.cli import main, run
from graphmfg.io import read_distribution_csv, read_trajectory_csv, sha256_file

TWO_CYCLE = {"nodes": 2, "edges": [[1, 2], [2, 1]]}


def minimal_config(**overrides):
    doc = {
        "graph": TWO_CYCLE,
        "coupling": {"family": "crowd_aversion", "a": 1.0},
        "horizon": 1.0,
    }
    doc.update(overrides)
    return doc


def test_defaults_materialized():
    cfg = parse_config(minimal_config())
    assert cfg.time_steps == 400
    assert cfg.damping == 0.5
    assert cfg.tol == 1e-8
    assert cfg.planning_resolution == 32
    assert cfg.seed == 42
    assert cfg.initial_distribution == (0.5, 0.5)
    assert cfg.cost_type == "quadratic"
    assert cfg.cost_weights == ((1, 2, 1.0), (2, 1, 1.0))


def test_round_trip_identity():
    cfg = parse_config(minimal_config(time_steps=100, solver={"damping": 0.7}))
    again = parse_config(cfg.to_dict())
    assert again == cfg
    assert parse_config(again.to_dict()) == again


@pytest.mark.parametrize(
    "patch,msg",
    [
        ({"solver": {"damping": 1.5}}, r"damping must lie in \(0, 1\]"),
        ({"solver": {"damping": 0.0}}, r"damping must lie"),
        ({"horizon": -1.0}, "horizon"),
        ({"time_steps": 0}, "time_steps"),
        ({"solver": {"tol": 0.0}}, "tol"),
        ({"bogus": 1}, "unknown key"),
        ({"solver": {"bogus": 1}}, "unknown key"),
        ({"coupling": {"family": "nope"}}, "family"),
        ({"coupling": {"family": "zero", "c": 1.0}}, "affine_mix"),
        ({"initial_distribution": [0.4, 0.4]}, "initial_distribution"),
        ({"cost": {"type": "power"}}, "exponent"),
        ({"cost": {"type": "quadratic", "weights": {"1->3": 1.0}}}, "no such edge"),
    ],
)
def test_rejections(patch, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(minimal_config(**patch))


def test_planning_node_limit():
    doc = minimal_config(
        graph={"nodes": 4, "edges": [[1, 2], [2, 3], [3, 4], [4, 1]]},
        initial_distribution=[0.25, 0.25, 0.25, 0.25],
        planning={"enabled": True},
    )
    with pytest.raises(ConfigError, match="N <= 3"):
        parse_config(doc)


def test_planning_needs_potentials():
    doc = minimal_config(coupling={"family": "affine_mix", "a": 1.0, "c": 0.1},
                         planning={"enabled": True})
    with pytest.raises(ConfigError, match="potential"):
        parse_config(doc)


def test_graph_file_reference(tmp_path):
    gpath = tmp_path / "graph.json"
    gpath.write_text(json.dumps(TWO_CYCLE))
    cfgpath = tmp_path / "run.json"
    cfgpath.write_text(json.dumps(minimal_config(graph={"path": "graph.json"})))
    cfg = load_config(str(cfgpath))
    assert cfg.graph_nodes == 2
    cfgpath.write_text(json.dumps(minimal_config(graph={"path": "missing.json"})))
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(str(cfgpath))


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    doc = minimal_config(
        time_steps=128,
        initial_distribution=[0.9, 0.1],
        planning={"enabled": True, "resolution": 16},
        output_dir=str(out),
    )
    cfg = parse_config(doc)
    assert run("solve-mfg", cfg) == 0
    assert run("solve-planning", cfg) == 0
    return out, cfg


def test_solve_mfg_outputs(run_dir):
    out, cfg = run_dir
    assert (out / "mfg_trajectory.csv").exists()
    report = json.loads((out / "mfg_report.json").read_text())
    assert report["converged"] is True
    assert report["residual"] <= cfg.tol
    assert set(report) == {"iterations", "residual", "converged", "wall_time_ms",
                           "apriori_bound", "apriori_max_u"}
    manifest = json.loads((out / "manifest_solve-mfg.json").read_text())
    assert manifest["config"]["time_steps"] == 128
    assert len(manifest["config_hash"]) == 64


def test_trajectory_round_trip(run_dir):
    out, cfg = run_dir
    graph = cfg.build_graph()
    t, u, m, rates = read_trajectory_csv(str(out / "mfg_trajectory.csv"), graph)
    assert t.shape == (129,)
    assert np.all(np.isfinite(u)) and np.all(np.isfinite(m)) and np.all(rates >= 0.0)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-10)


def test_verify_nash_subcommand(run_dir):
    out, cfg = run_dir
    assert run("verify-nash", cfg) == 0
    doc = json.loads((out / "nash_report.json").read_text())
    assert doc["max_gap"] <= 1e-6
    assert doc["oracle_error"] <= 1e-6
    assert doc["deviation_count"] >= 60


def test_check_master_subcommand(run_dir):
    out, cfg = run_dir
    assert run("check-master", cfg) == 0
    doc = json.loads((out / "master_report.json").read_text())
    assert np.isfinite(doc["sup_residual"]) and doc["sup_residual"] >= 0.0


def test_compare_subcommand(run_dir):
    out, cfg = run_dir
    assert run("compare", cfg) == 0
    doc = json.loads((out / "compare_report.json").read_text())
    assert 0.0 <= doc["sup_gap"] <= 0.05
    t, m = read_distribution_csv(str(out / "characteristics.csv"), cfg.build_graph())
    assert t.shape == (129,)


def test_check_monotonicity_subcommand(run_dir):
    out, cfg = run_dir
    assert run("check-monotonicity", cfg) == 0
    doc = json.loads((out / "monotonicity_report.json").read_text())
    assert doc["f_verdict"] == "monotone"
    assert doc["g_verdict"] == "degenerate"
    assert doc["violations"] == 0


def test_compare_missing_prerequisite(tmp_path):
    cfg = parse_config(minimal_config(output_dir=str(tmp_path / "empty")))
    with pytest.raises(FileNotFoundError, match="missing prerequisite"):
        run("compare", cfg)


def test_main_exit_codes(tmp_path):
    out = tmp_path / "o"
    cfgpath = tmp_path / "cfg.json"
    cfgpath.write_text(json.dumps(minimal_config(time_steps=64, output_dir=str(out))))
    assert main(["solve-mfg", "--config", str(cfgpath)]) == 0
    # forced early stop: unconverged flag and exit status 2
    doc = minimal_config(time_steps=64, output_dir=str(out),
                         initial_distribution=[0.9, 0.1],
                         solver={"max_iter": 1})
    cfgpath.write_text(json.dumps(doc))
    assert main(["solve-mfg", "--config", str(cfgpath)]) == 2
    report = json.loads((out / "mfg_report.json").read_text())
    assert report["converged"] is False
    # config errors exit 1
    cfgpath.write_text(json.dumps(minimal_config(solver={"damping": 2.0})))
    assert main(["solve-mfg", "--config", str(cfgpath)]) == 1
    assert main(["compare", "--config", str(tmp_path / "nonexistent.json")]) == 1


def test_zero_coupling_zero_residual(tmp_path):
    doc = minimal_config(coupling={"family": "zero"}, time_steps=32,
                         output_dir=str(tmp_path / "z"))
    cfg = parse_config(doc)
    assert run("solve-mfg", cfg) == 0
    report = json.loads((tmp_path / "z" / "mfg_report.json").read_text())
    assert report["residual"] == 0.0 and report["iterations"] == 1


def test_determinism_bit_identical(tmp_path):
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / name
        doc = minimal_config(
            time_steps=96,
            initial_distribution=[0.8, 0.2],
            planning={"enabled": True, "resolution": 12},
            output_dir=str(out),
        )
        cfg = parse_config(doc)
        assert run("solve-mfg", cfg, seed=7) == 0
        assert run("solve-planning", cfg, seed=7) == 0
        assert run("verify-nash", cfg, seed=7) == 0
        csvs = sorted(p for p in os.listdir(out) if p.endswith(".csv"))
        hashes.append([sha256_file(str(out / p)) for p in csvs])
    assert hashes[0] == hashes[1]


def test_seed_override_changes_manifest(tmp_path):
    out = tmp_path / "s"
    cfg = parse_config(minimal_config(time_steps=32, output_dir=str(out)))
    assert run("solve-mfg", cfg, seed=123) == 0
    manifest = json.loads((out / "manifest_solve-mfg.json").read_text())
    assert manifest["seed"] == 123
    assert manifest["config"]["verification"]["rng_seed"] == 123
