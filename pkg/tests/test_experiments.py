"""Experiment driver: config validation, reproducibility, persistence, CLI."""

import json

import pytest

from vrjplab.cli import main
from vrjplab.experiments import (ConfigError, ExperimentResult, load_config,
                                 result_matches_config, run_decay, run_equivalence,
                                 run_percolation, run_simulate, run_ward)


def small_ward_config(**over):
    raw = {
        "graph": {"L": 2, "a": 1.0, "wired": True},
        "mcmc": {"burn_in": 100, "thinning": 1, "n_samples": 600, "n_chains": 2,
                 "proposal_scale": 1.2},
        "ward": {"vertices": [[0, 1], [2, 2], "delta"]},
    }
    raw.update(over.pop("raw", {}))
    return load_config("ward", raw, **over)


def test_config_unknown_field_path():
    with pytest.raises(ConfigError, match="bogus"):
        load_config("ward", {"bogus": 1})
    with pytest.raises(ConfigError, match="graph.side"):
        load_config("ward", {"graph": {"side": 3}})
    with pytest.raises(ConfigError, match="mcmc.steps"):
        load_config("ward", {"mcmc": {"steps": 10}})


def test_config_value_errors_carry_paths():
    with pytest.raises(ConfigError, match="percolation.eps"):
        load_config("percolation", {"percolation": {"eps": 2.0}})
    with pytest.raises(ConfigError, match="decay.distances"):
        load_config("decay", {"decay": {"distances": [40], "a_values": [1.0], "ctilde": 0.5},
                              "graph": {"L": 8, "a": 1.0, "wired": True}})
    with pytest.raises(ConfigError, match="graph.wired"):
        load_config("decay", {"decay": {"distances": [2], "a_values": [1.0], "ctilde": 0.5},
                              "graph": {"L": 8, "a": 1.0, "wired": False}})
    with pytest.raises(ConfigError, match="equivalence.k"):
        load_config("equivalence", {"equivalence": {"k": 9}})
    with pytest.raises(ConfigError, match="seed"):
        load_config("ward", {"seed": -3})


def test_config_hash_stability():
    a = small_ward_config(seed=5)
    b = small_ward_config(seed=5)
    c = small_ward_config(seed=6)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


def test_ward_runner_rows_and_flags():
    cfg = small_ward_config(seed=3)
    res = run_ward(cfg)
    assert len(res.rows) == 3
    names = {r.name for r in res.rows}
    assert "ward[(0,1)]" in names and "ward[delta]" in names
    for r in res.rows:
        assert r.n == 600
        assert abs(r.value - 1.0) <= 4.5 * r.std_error
        assert isinstance(r.extra["pass"], bool)
    assert res.metadata["config_hash"] == cfg.config_hash()


def test_ward_reproducible_and_worker_independent():
    cfg1 = small_ward_config(seed=9, workers=1)
    cfg2 = small_ward_config(seed=9, workers=2)
    rows1 = run_ward(cfg1).rows
    rows2 = run_ward(cfg2).rows
    for a, b in zip(rows1, rows2):
        assert a.name == b.name
        assert a.value == b.value          # bit-identical across scheduling
        assert a.std_error == b.std_error


def test_percolation_runner_and_matching(tmp_path):
    cfg = load_config("percolation",
                      {"percolation": {"L": 8, "eps": 1e-3, "n_samples": 400, "k_max": 3,
                                       "mode": "independent"}},
                      seed=2, out=str(tmp_path / "p.csv"))
    res = run_percolation(cfg)
    text1 = res.write(cfg.out, "csv")
    assert result_matches_config(cfg.out, cfg)
    other = load_config("percolation", None, seed=3)
    assert not result_matches_config(cfg.out, other)
    res2 = run_percolation(cfg)
    text2 = res2.to_csv_text()
    strip = lambda t: [l for l in t.splitlines() if not l.startswith("# wall_time")]
    assert strip(text1) == strip(text2)


def test_json_format(tmp_path):
    cfg = load_config("percolation",
                      {"percolation": {"L": 6, "eps": 1e-3, "n_samples": 200, "k_max": 2,
                                       "mode": "independent"}},
                      seed=4, out=str(tmp_path / "p.json"), fmt="json")
    res = run_percolation(cfg)
    res.write(cfg.out, "json")
    doc = json.loads(open(cfg.out).read())
    assert doc["metadata"]["config_hash"] == cfg.config_hash()
    assert len(doc["rows"]) == 2
    assert result_matches_config(cfg.out, cfg)


def test_equivalence_runner_small():
    cfg = load_config("equivalence",
                      {"equivalence": {"k": 1, "n_runs": 1500, "env_thinning": 4,
                                       "env_burn_in": 100, "n_bootstrap": 100}},
                      seed=5)
    res = run_equivalence(cfg)
    row = res.rows[0]
    assert row.name == "tv_distance"
    assert row.extra["pass"]


def test_decay_runner_small():
    cfg = load_config("decay",
                      {"graph": {"L": 4, "a": 2.0, "wired": True},
                       "mcmc": {"burn_in": 150, "thinning": 1, "n_samples": 800,
                                "n_chains": 2, "proposal_scale": 1.2},
                       "decay": {"distances": [1, 2, 4], "a_values": [2.0], "ctilde": 0.3}},
                      seed=6)
    res = run_decay(cfg)
    names = [r.name for r in res.rows]
    assert "mean_exp_half_u[a=2.0,d=1]" in names
    assert "p_u_above_threshold[a=2.0,d=2]" in names
    assert "decay_exponent[a=2.0]" in names
    mean_rows = [r for r in res.rows if r.name.startswith("mean_exp_half_u")]
    for r in mean_rows:
        assert 0.0 < r.value <= 1.05
        assert r.extra["raw_mean"] > 0
    slope_row = next(r for r in res.rows if r.name.startswith("decay_exponent"))
    assert slope_row.extra["ci95_low"] <= slope_row.value <= slope_row.extra["ci95_high"]


def test_simulate_runner(tmp_path):
    out = tmp_path / "traj.csv"
    cfg = load_config("simulate",
                      {"graph": {"L": 2, "a": 1.0, "wired": False},
                       "simulate": {"process": "vrjp", "horizon": 3.0, "local_times": True}},
                      seed=7, out=str(out))
    res = run_simulate(cfg)
    assert out.exists()
    head = out.read_text().splitlines()[:2]
    assert head[0].startswith("# config_hash=")
    assert any(r.name == "n_jumps" for r in res.rows)


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"percolation": {"eps": 5}}))
    assert main(["percolation", "--config", str(bad)]) == 1
    assert main(["percolation", "--config", str(tmp_path / "missing.json")]) == 1
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"percolation":
                                {"L": 6, "eps": 1e-3, "n_samples": 100, "k_max": 2,
                                 "mode": "independent"}}))
    assert main(["percolation", "--config", str(good), "--dry-run"]) == 0
    out = tmp_path / "out.csv"
    assert main(["percolation", "--config", str(good), "--seed", "1",
                 "--out", str(out)]) == 0
    assert out.exists()


def test_cli_stdout_when_no_out(capsys):
    rc = main(["percolation", "--config", None] if False else
              ["percolation", "--seed", "1", "--dry-run"])
    assert rc == 0
    assert "config ok" in capsys.readouterr().out


def test_result_csv_parses_back():
    res = ExperimentResult("demo", [], {"config_hash": "abc", "seed": 1})
    text = res.to_csv_text()
    assert "# config_hash=abc" in text
    assert text.strip().splitlines()[-1] == "name,value,std_error,n"


def test_graph_file_config(tmp_path):
    from vrjplab.graphs import star_graph
    g = star_graph(4, 1.0)
    gpath = tmp_path / "graph.json"
    gpath.write_text(g.to_json())
    cfg = load_config("ward",
                      {"graph_file": str(gpath),
                       "mcmc": {"burn_in": 60, "thinning": 1, "n_samples": 400,
                                "n_chains": 2, "proposal_scale": 1.2},
                       "ward": {"vertices": [1, 3]}},
                      seed=8)
    assert cfg.graph_file_digest is not None
    loaded = cfg.build_graph()
    assert loaded.n == 5 and loaded.origin == 0
    res = run_ward(cfg)
    assert len(res.rows) == 2
    for r in res.rows:
        assert abs(r.value - 1.0) <= 4.5 * r.std_error
    with pytest.raises(ConfigError, match="graph_file"):
        load_config("ward", {"graph_file": str(tmp_path / "nope.json")})
    with pytest.raises(ConfigError, match="graph_file"):
        load_config("decay", {"graph_file": str(gpath),
                              "decay": {"distances": [2], "a_values": [1.0], "ctilde": 0.5}})


def test_ward_empty_vertex_list():
    cfg = small_ward_config(raw={"ward": {"vertices": []}}, seed=10)
    res = run_ward(cfg)
    assert res.rows == []
    assert res.metadata["experiment"] == "ward"


def test_ward_exact_tree_sampler_has_tighter_errors(tmp_path):
    from vrjplab.graphs import star_graph
    g = star_graph(4, 1.0)
    gpath = tmp_path / "star.json"
    gpath.write_text(g.to_json())
    base = {"graph_file": str(gpath),
            "mcmc": {"burn_in": 200, "thinning": 1, "n_samples": 1500,
                     "n_chains": 2, "proposal_scale": 1.5},
            "ward": {"vertices": [1, 2]}}
    exact = run_ward(load_config("ward", {**base, "sampler": "tree"}, seed=12))
    mcmc = run_ward(load_config("ward", {**base, "sampler": "metropolis"}, seed=12))
    for re_, rm in zip(exact.rows, mcmc.rows):
        assert abs(re_.value - 1.0) <= 3 * re_.std_error
        assert re_.std_error < rm.std_error   # independent draws beat a correlated chain


def test_ward_vertex_box_validation():
    with pytest.raises(ConfigError, match="ward.vertices"):
        load_config("ward", {"graph": {"L": 2, "a": 1.0, "wired": True},
                             "ward": {"vertices": [[3, 0]]}})
    with pytest.raises(ConfigError, match="ward.vertices"):
        load_config("ward", {"graph": {"L": 2, "a": 1.0, "wired": False},
                             "ward": {"vertices": ["delta"]}})
