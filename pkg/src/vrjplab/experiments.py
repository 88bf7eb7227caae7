"""Batch experiment driver: configuration, seeding, orchestration, persistence.

Each experiment builds its graph from the config, fans the master seed out to
per-task seeds (numpy SeedSequence spawned by task index, recorded in the
metadata), runs its estimator tasks on a bounded worker pool, and reduces the
results in task-index order so that reruns with the same config and seed
reproduce every numeric output bit-identically. Output files embed a hash of
the normalized config.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .density import DensityModel, UField, log_density, minor_determinant, spanning_tree_sum
from .gibbs import GaussianMinorSampler, _independence_coloring, _run_gibbs_chain
from .graphs import BoxSpec, WeightedGraph, build_box_2d, cycle_graph, from_edge_list
from .percolation import radius_sum_experiment, radius_tail_experiment
from .rwre import equivalence_test, simulate_rwre
from .sampling import (McmcConfig, SiteChain, effective_sample_size,
                       sample_field_tree_exact, split_rhat)
from .vrjp import LocalTimeVector, q_statistics, simulate_vrjp, time_change, write_trajectory_csv


class ConfigError(ValueError):
    """Invalid experiment configuration; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


EXPERIMENTS = ("ward", "decay", "equivalence", "percolation", "simulate")

_DEFAULTS: dict = {
    "seed": 0,
    "workers": 1,
    "format": "csv",
    "out": None,
    "graph": {"L": 6, "a": 1.0, "wired": True},
    "mcmc": {"proposal_scale": 1.0, "burn_in": 500, "thinning": 1,
             "n_samples": 4000, "n_chains": 2},
    "sampler": "gibbs",
    "ward": {"vertices": [[0, 1], [1, 1], [3, 0], "delta"]},
    "decay": {"distances": [2, 4, 8, 16], "a_values": [4.0], "ctilde": 0.25},
    "equivalence": {"a": 1.0, "k": 3, "n_runs": 20000, "env_thinning": 20,
                    "env_burn_in": 300, "n_bootstrap": 200},
    "percolation": {"L": 20, "eps": 1e-3, "n_samples": 10000, "k_max": 5,
                    "mode": "independent", "ell": None, "ell_n_samples": 2000},
    "simulate": {"process": "vrjp", "horizon": 5.0, "local_times": True},
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    workers: int
    fmt: str
    out: str | None
    graph: BoxSpec
    mcmc: McmcConfig
    sampler: str
    sections: dict = field(default_factory=dict)
    graph_file: str | None = None
    graph_file_digest: str | None = None

    def build_graph(self) -> WeightedGraph:
        if self.graph_file is not None:
            with open(self.graph_file) as fh:
                return WeightedGraph.from_json(fh.read())
        return self.graph.build()

    def normalized(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "graph": {"L": self.graph.L, "a": self.graph.a, "wired": self.graph.wired},
            "graph_file_digest": self.graph_file_digest,
            "mcmc": {"proposal_scale": self.mcmc.proposal_scale, "burn_in": self.mcmc.burn_in,
                     "thinning": self.mcmc.thinning, "n_samples": self.mcmc.n_samples,
                     "n_chains": self.mcmc.n_chains},
            "sampler": self.sampler,
            "sections": self.sections,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.normalized(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _expect(mapping, key, types, path, default=None, required=False):
    if key not in mapping:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    val = mapping[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"{path}.{key}", f"expected {types}, got {type(val).__name__}")
    return val


def load_config(experiment: str, raw: dict | None = None, *, seed=None, out=None,
                fmt=None, workers=None) -> ExperimentConfig:
    """Build a validated config from a raw dict plus command-line overrides."""
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    raw = dict(raw or {})
    known = {"experiment", "seed", "workers", "format", "out", "graph", "graph_file",
             "mcmc", "sampler", *EXPERIMENTS}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown field")
    if "experiment" in raw and raw["experiment"] != experiment:
        raise ConfigError("experiment", f"config is for {raw['experiment']!r}, not {experiment!r}")

    seed = seed if seed is not None else _expect(raw, "seed", int, "", default=_DEFAULTS["seed"])
    if isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    workers = workers if workers is not None else _expect(raw, "workers", int, "",
                                                          default=_DEFAULTS["workers"])
    if workers < 1:
        raise ConfigError("workers", "must be at least 1")
    fmt = fmt if fmt is not None else _expect(raw, "format", str, "", default=_DEFAULTS["format"])
    if fmt not in ("csv", "json"):
        raise ConfigError("format", f"must be 'csv' or 'json', got {fmt!r}")
    out = out if out is not None else _expect(raw, "out", str, "", default=None)

    graw = {**_DEFAULTS["graph"], **_expect(raw, "graph", dict, "", default={})}
    for key in graw:
        if key not in ("L", "a", "wired"):
            raise ConfigError(f"graph.{key}", "unknown field")
    try:
        graph = BoxSpec(_expect(graw, "L", int, "graph", required=True),
                        float(_expect(graw, "a", (int, float), "graph", required=True)),
                        _expect(graw, "wired", bool, "graph", default=True))
    except ValueError as exc:
        raise ConfigError("graph", str(exc)) from exc

    mraw = {**_DEFAULTS["mcmc"], **_expect(raw, "mcmc", dict, "", default={})}
    for key in mraw:
        if key not in ("proposal_scale", "burn_in", "thinning", "n_samples", "n_chains"):
            raise ConfigError(f"mcmc.{key}", "unknown field")
    try:
        mcmc = McmcConfig(proposal_scale=float(mraw["proposal_scale"]),
                          burn_in=int(mraw["burn_in"]), thinning=int(mraw["thinning"]),
                          n_samples=int(mraw["n_samples"]), n_chains=int(mraw["n_chains"]),
                          seed=seed)
    except ValueError as exc:
        raise ConfigError("mcmc", str(exc)) from exc

    sampler = _expect(raw, "sampler", str, "", default=_DEFAULTS["sampler"])
    if sampler not in ("gibbs", "metropolis", "tree"):
        raise ConfigError("sampler", f"must be 'gibbs', 'metropolis' or 'tree', got {sampler!r}")

    graph_file = _expect(raw, "graph_file", str, "", default=None)
    digest = None
    if graph_file is not None:
        if experiment == "decay":
            raise ConfigError("graph_file", "the decay experiment runs on wired box parameters")
        try:
            with open(graph_file) as fh:
                text = fh.read()
            WeightedGraph.from_json(text)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("graph_file", f"cannot load graph: {exc}") from exc
        digest = hashlib.sha256(text.encode()).hexdigest()[:16]

    sections = {}
    for name in EXPERIMENTS:
        sections[name] = {**_DEFAULTS.get(name, {}), **_expect(raw, name, dict, "", default={})}
    cfg = ExperimentConfig(experiment, seed, workers, fmt, out, graph, mcmc, sampler, sections,
                           graph_file, digest)
    _validate_section(cfg)
    return cfg


def _validate_section(cfg: ExperimentConfig):
    sec = cfg.sections[cfg.experiment]
    path = cfg.experiment
    if cfg.experiment == "ward":
        verts = _expect(sec, "vertices", list, path, default=[])
        sec["vertices"] = [tuple(v) if isinstance(v, list) else v for v in verts]
        if cfg.graph_file is None:
            for v in sec["vertices"]:
                if v == "delta":
                    if not cfg.graph.wired:
                        raise ConfigError(f"{path}.vertices",
                                          "'delta' requires a wired box")
                elif not (isinstance(v, tuple) and len(v) == 2
                          and max(abs(v[0]), abs(v[1])) <= cfg.graph.L):
                    raise ConfigError(f"{path}.vertices",
                                      f"vertex {v!r} lies outside the box")
    elif cfg.experiment == "decay":
        if not cfg.graph.wired:
            raise ConfigError("graph.wired", "the decay experiment runs on the wired box")
        dists = _expect(sec, "distances", list, path, required=True)
        if not dists or any((not isinstance(d, int)) or d < 1 for d in dists):
            raise ConfigError(f"{path}.distances", "must be positive integers")
        if max(dists) > cfg.graph.L:
            raise ConfigError(f"{path}.distances",
                              f"distance {max(dists)} exceeds the box half-side {cfg.graph.L}")
        avals = _expect(sec, "a_values", list, path, required=True)
        if not avals or any(not (isinstance(a, (int, float)) and a > 0) for a in avals):
            raise ConfigError(f"{path}.a_values", "must be positive reals")
        ct = _expect(sec, "ctilde", (int, float), path, required=True)
        if ct <= 0:
            raise ConfigError(f"{path}.ctilde", "must be positive")
    elif cfg.experiment == "equivalence":
        k = _expect(sec, "k", int, path, required=True)
        if not 1 <= k <= 5:
            raise ConfigError(f"{path}.k", "jump depth must lie in 1..5")
        n = _expect(sec, "n_runs", int, path, required=True)
        if n < 0:
            raise ConfigError(f"{path}.n_runs", "must be nonnegative")
    elif cfg.experiment == "percolation":
        eps = _expect(sec, "eps", (int, float), path, required=True)
        if not 0 <= eps <= 1:
            raise ConfigError(f"{path}.eps", "must lie in [0, 1]")
        if _expect(sec, "mode", str, path, required=True) not in ("independent", "coupled"):
            raise ConfigError(f"{path}.mode", "must be 'independent' or 'coupled'")
        if _expect(sec, "n_samples", int, path, required=True) < 1:
            raise ConfigError(f"{path}.n_samples", "must be positive")
        ell = sec.get("ell")
        if ell is not None and (not isinstance(ell, int) or ell < 2):
            raise ConfigError(f"{path}.ell", "must be an integer >= 2")
    elif cfg.experiment == "simulate":
        if _expect(sec, "process", str, path, required=True) not in ("vrjp", "rwre"):
            raise ConfigError(f"{path}.process", "must be 'vrjp' or 'rwre'")
        hz = _expect(sec, "horizon", (int, float), path, required=True)
        if hz <= 0:
            raise ConfigError(f"{path}.horizon", "must be positive")


def load_config_file(experiment: str, config_path: str | None, **overrides) -> ExperimentConfig:
    raw = None
    if config_path is not None:
        with open(config_path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("", f"invalid JSON in {config_path}: {exc}") from exc
    return load_config(experiment, raw, **overrides)


# ---- results -----------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorRow:
    name: str
    value: float
    std_error: float
    n: int
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    experiment: str
    rows: list
    metadata: dict

    def extra_keys(self) -> list:
        keys: list = []
        for r in self.rows:
            for k in r.extra:
                if k not in keys:
                    keys.append(k)
        return keys

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.metadata):
            buf.write(f"# {k}={self.metadata[k]}\n")
        w = csv.writer(buf)
        extras = self.extra_keys()
        w.writerow(["name", "value", "std_error", "n", *extras])
        for r in self.rows:
            w.writerow([r.name, repr(float(r.value)), repr(float(r.std_error)), r.n,
                        *[_csv_cell(r.extra.get(k)) for k in extras]])
        return buf.getvalue()

    def to_json_text(self) -> str:
        doc = {
            "metadata": self.metadata,
            "rows": [{"name": r.name, "value": r.value, "std_error": r.std_error,
                      "n": r.n, **r.extra} for r in self.rows],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    def write(self, path: str | None, fmt: str = "csv") -> str:
        text = self.to_csv_text() if fmt == "csv" else self.to_json_text()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def result_matches_config(path: str, cfg: ExperimentConfig) -> bool:
    """Check the config hash embedded in an output file against a config."""
    want = cfg.config_hash()
    with open(path) as fh:
        head = fh.read(65536)
    if head.lstrip().startswith("{"):
        return json.loads(head)["metadata"].get("config_hash") == want
    for line in head.splitlines():
        if line.startswith("# config_hash="):
            return line.split("=", 1)[1].strip() == want
    return False


def _base_metadata(cfg: ExperimentConfig) -> dict:
    return {
        "experiment": cfg.experiment,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "seed_derivation": "numpy SeedSequence(seed).spawn, one child per task index",
        "version": __version__,
        "numpy": np.__version__,
    }


# ---- worker pool --------------------------------------------------------------------


def run_tasks(fn, args_list, workers: int):
    """Run fn over args_list, in order, optionally on a process pool.

    Results are reduced by task index regardless of completion order.
    """
    if workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=min(workers, len(args_list))) as pool:
        futures = [pool.submit(fn, a) for a in args_list]
        return [f.result() for f in futures]


def _chain_task(args):
    """One sampling chain; returns tracked-vertex series and chain stats.

    args: (graph_desc, mcmc_dict, seed_seq, sampler, track_labels) with
    graph_desc either ("box", L, a, wired) or ("file", path); seed_seq seeds
    this chain's generator.
    """
    graph_desc, mcmc_dict, seed_seq, sampler, track_labels = args
    if graph_desc[0] == "file":
        with open(graph_desc[1]) as fh:
            g = WeightedGraph.from_json(fh.read())
    else:
        g = BoxSpec(graph_desc[1], graph_desc[2], wired=graph_desc[3]).build()
    model = DensityModel(g)
    cfg = McmcConfig(**mcmc_dict)
    rng = np.random.default_rng(seed_seq)
    n_keep = cfg.n_samples
    track = [g.vertex_index(v) for v in track_labels]
    if sampler == "gibbs":
        coloring = _independence_coloring(model)
        gauss = GaussianMinorSampler(model)
        arr, acc, scale = _run_gibbs_chain(model, cfg, rng, n_keep, 10, 5, coloring, gauss)
    elif sampler == "metropolis":
        from .sampling import _run_site_chain
        arr, acc, scale = _run_site_chain(model, cfg, rng, n_keep)
    else:  # tree-exact draws, only for tree graphs
        draws = [sample_field_tree_exact(model, rng) for _ in range(n_keep)]
        arr = np.stack([d.values for d in draws])
        acc, scale = 1.0, 0.0
    free_pos = {int(v): i for i, v in enumerate(model.free_u)}
    cols = np.array([free_pos[v] for v in track], dtype=np.int64)
    return arr[:, cols], float(acc), float(scale)


def _pooled_stats(series_per_chain):
    """Mean, autocorrelation-adjusted SE, and pooled ESS of chain series."""
    pooled = np.concatenate(series_per_chain)
    n = pooled.size
    ess = min(float(n), sum(effective_sample_size(s) for s in series_per_chain))
    sd = float(pooled.std(ddof=1)) if n > 1 else 0.0
    se = sd / math.sqrt(ess) if ess > 0 else 0.0
    return float(pooled.mean()), se, ess


# ---- runners ------------------------------------------------------------------------


def run_ward(cfg: ExperimentConfig) -> ExperimentResult:
    """Ward-identity estimates at the configured vertices, flagged at 3 SE."""
    t0 = time.time()
    sec = cfg.sections["ward"]
    vertices = sec["vertices"]
    meta = _base_metadata(cfg)
    rows: list = []
    warnings_list: list = []
    if vertices:
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.mcmc.n_chains)
        per_chain = [cfg.mcmc.n_samples // cfg.mcmc.n_chains] * cfg.mcmc.n_chains
        for i in range(cfg.mcmc.n_samples % cfg.mcmc.n_chains):
            per_chain[i] += 1
        if cfg.graph_file is not None:
            desc = ("file", cfg.graph_file)
        else:
            desc = ("box", cfg.graph.L, cfg.graph.a, cfg.graph.wired)
        args = []
        for n_keep, ss in zip(per_chain, seeds):
            if n_keep == 0:
                continue
            md = {"proposal_scale": cfg.mcmc.proposal_scale, "burn_in": cfg.mcmc.burn_in,
                  "thinning": cfg.mcmc.thinning, "n_samples": n_keep, "n_chains": 1,
                  "seed": cfg.seed}
            args.append((desc, md, ss, cfg.sampler, vertices))
        outs = run_tasks(_chain_task, args, cfg.workers)
        acc = float(np.mean([o[1] for o in outs]))
        if cfg.sampler != "tree" and not 0.15 <= acc <= 0.6:
            warnings_list.append(f"acceptance rate {acc:.3f} outside [0.15, 0.6]")
        n_min = min(o[0].shape[0] for o in outs)
        for j, v in enumerate(vertices):
            series = [np.exp(o[0][:, j]) for o in outs]
            mean, se, ess = _pooled_stats(series)
            rhat = split_rhat(np.stack([s[:n_min] for s in series])) if n_min >= 4 else 1.0
            if rhat > 1.05:
                warnings_list.append(f"split-Rhat {rhat:.3f} at vertex {v}")
            rows.append(EstimatorRow(
                f"ward[{_fmt_vertex(v)}]", mean, se, sum(s.size for s in series),
                {"pass": abs(mean - 1.0) <= 3.0 * se if se > 0 else mean == 1.0,
                 "ess": ess, "split_rhat": rhat}))
        meta["acceptance_rate"] = acc
    meta["warnings"] = "; ".join(warnings_list)
    meta["wall_time_s"] = round(time.time() - t0, 3)
    return ExperimentResult("ward", rows, meta)


def _fmt_vertex(v) -> str:
    return f"({v[0]},{v[1]})" if isinstance(v, tuple) else str(v)


def run_decay(cfg: ExperimentConfig) -> ExperimentResult:
    """Distance decay of E[exp(u_x / 2)] on the wired box, across a-values.

    The headline estimator averages exp(u/2) over the four symmetric sites at
    each distance and subtracts the exactly-centered control variate
    (exp(u) - 1) / 2, whose mean vanishes by the Ward identity; the raw mean
    is reported alongside. The per-a decay exponent is a weighted least
    squares fit of log mean against log distance.
    """
    t0 = time.time()
    sec = cfg.sections["decay"]
    dists = sec["distances"]
    meta = _base_metadata(cfg)
    rows: list = []
    site_labels = [(d, 0) for d in dists] + [(-d, 0) for d in dists] \
        + [(0, d) for d in dists] + [(0, -d) for d in dists]
    base_seed = np.random.SeedSequence(cfg.seed)
    for a in sec["a_values"]:
        seeds = base_seed.spawn(cfg.mcmc.n_chains)
        per_chain = [cfg.mcmc.n_samples // cfg.mcmc.n_chains] * cfg.mcmc.n_chains
        for i in range(cfg.mcmc.n_samples % cfg.mcmc.n_chains):
            per_chain[i] += 1
        args = []
        for n_keep, ss in zip(per_chain, seeds):
            if n_keep == 0:
                continue
            md = {"proposal_scale": cfg.mcmc.proposal_scale, "burn_in": cfg.mcmc.burn_in,
                  "thinning": cfg.mcmc.thinning, "n_samples": n_keep, "n_chains": 1,
                  "seed": cfg.seed}
            args.append((("box", cfg.graph.L, float(a), True), md, ss, cfg.sampler,
                         site_labels))
        outs = run_tasks(_chain_task, args, cfg.workers)
        mus, ses = [], []
        for di, d in enumerate(dists):
            cols = [di, di + len(dists), di + 2 * len(dists), di + 3 * len(dists)]
            cv_series, raw_series, prob_series = [], [], []
            for arr, _, _ in outs:
                u = arr[:, cols]
                eu2 = np.exp(0.5 * u).mean(axis=1)
                eu = np.exp(u).mean(axis=1)
                cv_series.append(eu2 - 0.5 * (eu - 1.0))
                raw_series.append(eu2)
                prob_series.append((u >= -sec["ctilde"] * math.log(d)).mean(axis=1))
            mean, se, ess = _pooled_stats(cv_series)
            raw_mean, raw_se, _ = _pooled_stats(raw_series)
            p_mean, p_se, _ = _pooled_stats(prob_series)
            n_tot = sum(s.size for s in cv_series)
            rows.append(EstimatorRow(
                f"mean_exp_half_u[a={a},d={d}]", mean, se, n_tot,
                {"ess": ess, "raw_mean": raw_mean, "raw_se": raw_se}))
            rows.append(EstimatorRow(
                f"p_u_above_threshold[a={a},d={d}]", p_mean, p_se, n_tot,
                {"threshold": -sec["ctilde"] * math.log(d)}))
            mus.append(mean)
            ses.append(se)
        slope, se_slope = _weighted_loglog_slope(dists, mus, ses)
        mono = all(mus[i + 1] <= mus[i] + 3.0 * math.hypot(ses[i], ses[i + 1])
                   for i in range(len(dists) - 1))
        rows.append(EstimatorRow(
            f"decay_exponent[a={a}]", slope, se_slope, len(dists),
            {"ci95_low": slope - 1.96 * se_slope, "ci95_high": slope + 1.96 * se_slope,
             "negative_95cl": slope + 1.96 * se_slope < 0.0,
             "nonincreasing_3se": mono}))
    meta["wall_time_s"] = round(time.time() - t0, 3)
    return ExperimentResult("decay", rows, meta)


def _weighted_loglog_slope(dists, means, ses):
    x = np.log(np.asarray(dists, dtype=np.float64))
    y = np.log(np.asarray(means, dtype=np.float64))
    yerr = np.asarray(ses) / np.asarray(means)
    wts = 1.0 / np.maximum(yerr, 1e-12) ** 2
    xb = float((wts * x).sum() / wts.sum())
    yb = float((wts * y).sum() / wts.sum())
    sxx = float((wts * (x - xb) ** 2).sum())
    slope = float((wts * (x - xb) * (y - yb)).sum() / sxx)
    return slope, float(1.0 / math.sqrt(sxx))


def make_env_sampler(g: WeightedGraph, burn_in: int, thinning: int, scale: float = 1.5):
    """Stateful environment sampler handle: each call advances a single-site
    Metropolis chain by `thinning` sweeps and returns the current field."""
    model = DensityModel(g)
    chain = SiteChain(model)
    state = {"burned": False}

    def sampler(rng: np.random.Generator) -> UField:
        sweeps = thinning
        if not state["burned"]:
            sweeps += burn_in
            state["burned"] = True
        for _ in range(sweeps):
            for site in model.free_u:
                delta = scale * rng.standard_normal()
                logr = chain.log_ratio(int(site), delta)
                if logr >= 0 or rng.random() < math.exp(logr):
                    chain.apply(int(site), delta)
            chain.refresh()
        return UField(g, chain.u[model.free_u])

    return sampler


def run_equivalence(cfg: ExperimentConfig) -> ExperimentResult:
    """Total-variation comparison of the two pictures on the triangle graph."""
    t0 = time.time()
    sec = cfg.sections["equivalence"]
    g = cycle_graph(3, float(sec["a"]))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    sampler = make_env_sampler(g, sec["env_burn_in"], sec["env_thinning"])
    report = equivalence_test(g, sec["k"], sec["n_runs"], sampler, rng,
                              n_bootstrap=sec["n_bootstrap"])
    meta = _base_metadata(cfg)
    meta.update({"k": report.k, "n_bootstrap": report.n_bootstrap,
                 "wall_time_s": round(time.time() - t0, 3)})
    rows = [EstimatorRow("tv_distance", report.tv, report.bootstrap_se, report.n_each,
                         {"ci95_low": report.ci[0], "ci95_high": report.ci[1],
                          "pass": report.tv <= 3.0 * report.bootstrap_se or report.n_each == 0})]
    return ExperimentResult("equivalence", rows, meta)


def run_percolation(cfg: ExperimentConfig) -> ExperimentResult:
    """Cluster-radius tail table, plus the annulus sum experiment when asked."""
    t0 = time.time()
    sec = cfg.sections["percolation"]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    table = radius_tail_experiment(sec["L"], float(sec["eps"]), sec["n_samples"],
                                   sec["k_max"], rng, mode=sec["mode"],
                                   seed_note=str(cfg.seed))
    rows = [
        EstimatorRow(f"p_radius_ge[{r.k}]", r.p_empirical, r.stderr, sec["n_samples"],
                     {"bound_exp": r.bound_exp, "bound_path": r.bound_path,
                      "violation": r.violation})
        for r in table.rows
    ]
    meta = _base_metadata(cfg)
    if sec.get("ell") is not None:
        rep = radius_sum_experiment(sec["ell"], float(sec["eps"]), sec["ell_n_samples"], rng,
                                    mode=sec["mode"])
        rows.append(EstimatorRow(f"p_radius_sum_ge_log_ell[{rep.ell}]", rep.p_exceed,
                                 rep.exceed_stderr, rep.n_samples,
                                 {"threshold": rep.threshold, "mean_s": rep.mean_s,
                                  "max_s": rep.max_s}))
    meta["wall_time_s"] = round(time.time() - t0, 3)
    return ExperimentResult("percolation", rows, meta)


def run_simulate(cfg: ExperimentConfig) -> ExperimentResult:
    """Simulate one trajectory and export it; summary statistics as rows."""
    t0 = time.time()
    sec = cfg.sections["simulate"]
    g = cfg.build_graph()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    if sec["process"] == "vrjp":
        traj = simulate_vrjp(g, float(sec["horizon"]), rng)
    else:
        traj = simulate_rwre(g, UField.zeros(g), float(sec["horizon"]), rng)
    meta = _base_metadata(cfg)
    if cfg.out is not None:
        write_trajectory_csv(traj, cfg.out, local_times_at_horizon=sec["local_times"],
                             metadata={"config_hash": meta["config_hash"], "seed": cfg.seed})
    tc = time_change(traj)
    rows = [
        EstimatorRow("n_jumps", float(traj.n_jumps), 0.0, 1, {}),
        EstimatorRow("horizon", float(traj.horizon), 0.0, 1, {}),
        EstimatorRow("d_at_horizon", float(tc.d_horizon), 0.0, 1, {}),
    ]
    meta["wall_time_s"] = round(time.time() - t0, 3)
    return ExperimentResult("simulate", rows, meta)


RUNNERS = {
    "ward": run_ward,
    "decay": run_decay,
    "equivalence": run_equivalence,
    "percolation": run_percolation,
    "simulate": run_simulate,
}


# ---- invariant battery (the `check` subcommand) --------------------------------------


def run_check(seed: int = 0) -> tuple[bool, list]:
    """Fast invariant battery; returns (all_passed, report lines)."""
    from scipy.integrate import quad

    lines: list = []
    ok = True

    def record(name: str, passed: bool, detail: str = ""):
        nonlocal ok
        ok = ok and passed
        lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))

    rng = np.random.default_rng(seed)

    g1 = from_edge_list([(0, 1, 1.0)], 0)
    m1 = DensityModel(g1)
    total = quad(lambda t: math.exp(log_density(m1, UField(g1, [t]))), -40, 40, limit=200)[0]
    record("density normalization (single edge)", abs(total - 1.0) < 1e-8, f"integral={total!r}")

    worst = 0.0
    for _ in range(5):
        k = int(rng.integers(3, 6))
        g = cycle_graph(k, float(rng.uniform(0.5, 2.0)))
        m = DensityModel(g)
        u = UField(g, rng.uniform(-2, 2, g.n - 1))
        det = minor_determinant(m, u)
        tree = spanning_tree_sum(m, u)
        worst = max(worst, abs(det - tree) / tree)
    record("matrix-tree identity (random cycles)", worst < 1e-10, f"rel_err={worst:.2e}")

    box = build_box_2d(2, 1.0)
    bad = 0
    pairs = 0
    for k in range(25):
        traj = simulate_vrjp(box, 4.0, np.random.default_rng(seed * 1000 + k))
        seen = set()
        for i in range(traj.n_jumps):
            pair = (int(traj.src[i]), int(traj.dst[i]))
            if pair in seen:
                continue
            seen.add(pair)
            st = q_statistics(traj, box.labels[pair[0]], box.labels[pair[1]])
            pairs += 1
            if abs(st.Q - (st.q ** 2 + 2 * st.q)) > 1e-9 * (1 + st.Q):
                bad += 1
    record("occupation-time identity Q = q^2 + 2q", bad == 0, f"{pairs} pairs, {bad} violations")

    traj = simulate_vrjp(box, 6.0, rng)
    lt = LocalTimeVector(traj)
    cons = max(abs((lt.vector_at(t) - 1).sum() - t) for t in np.linspace(0.5, 6.0, 8))
    record("local-time conservation", cons < 1e-10, f"max_err={cons:.2e}")
    tc = time_change(traj)
    dmin = min(tc.d(t) - t for t in np.linspace(0.01, 6.0, 50))
    record("time change dominates time", dmin >= 0, f"min(D(t)-t)={dmin:.3g}")

    from .graphs import star_graph
    st5 = star_graph(4, 1.0)
    ms = DensityModel(st5)
    draws = [sample_field_tree_exact(ms, rng) for _ in range(3000)]
    series = np.array([math.exp(d.values[0]) for d in draws])
    z = abs(series.mean() - 1.0) / (series.std(ddof=1) / math.sqrt(len(series)))
    record("Ward identity (exact tree sampler)", z < 4.0, f"z={z:.2f}")

    from .percolation import sample_union_percolation
    s0 = sample_union_percolation(6, 0.0, "independent", rng)
    s1 = sample_union_percolation(6, 1.0, "independent", rng)
    record("percolation edge cases", s0.open_edges.size == 0
           and s1.open_edges.size == s1.lattice.m)

    g3 = cycle_graph(3, 1.0)
    sampler = make_env_sampler(g3, 200, 5)
    rep = equivalence_test(g3, 1, 4000, sampler, np.random.default_rng(seed + 1))
    record("first-jump equivalence (triangle)", rep.tv <= 3.0 * rep.bootstrap_se,
           f"tv={rep.tv:.4f} null_se={rep.bootstrap_se:.4f}")

    return ok, lines
