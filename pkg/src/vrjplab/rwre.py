"""Random walk in random environment: the second picture of the reinforced walk.

Conditional on an environment field u, the walk jumps from x to a neighbour y
at rate (1/2) W_xy exp(u_y - u_x). Averaged over fields drawn from the
environment density, the first jumps of this walk match the time-changed
reinforced process; `equivalence_test` measures exactly that.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .density import UField
from .graphs import WeightedGraph
from .vrjp import VrjpTrajectory, simulate_vrjp


def simulate_rwre(g: WeightedGraph, u: UField, horizon: float, rng: np.random.Generator,
                  max_jumps: int | None = None) -> VrjpTrajectory:
    """Continuous-time Markov walk from the origin with environment-tilted rates."""
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    u_full = u.full()
    rates = [0.5 * g.adj_weight[v] * np.exp(u_full[g.adj[v]] - u_full[v]) for v in range(g.n)]
    cum = [np.cumsum(r) for r in rates]
    cur = g.origin_index
    t = 0.0
    times: list[float] = []
    src: list[int] = []
    dst: list[int] = []
    while True:
        if max_jumps is not None and len(times) >= max_jumps:
            break
        if g.adj[cur].size == 0:
            break
        total = cum[cur][-1]
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            break
        t += dt
        target = int(g.adj[cur][np.searchsorted(cum[cur], rng.random() * total, side="right")])
        times.append(t)
        src.append(cur)
        dst.append(target)
        cur = target
    end = horizon if np.isfinite(horizon) else (times[-1] if times else 0.0)
    return VrjpTrajectory(g, g.origin_index, np.asarray(times), np.asarray(src, dtype=np.int64),
                          np.asarray(dst, dtype=np.int64), float(end))


def q_estimator(traj: VrjpTrajectory, x, y) -> float | None:
    """Occupation time at x before the first x -> y jump; None if never observed."""
    g = traj.graph
    xi, yi = g.vertex_index(x), g.vertex_index(y)
    hits = np.nonzero((traj.src == xi) & (traj.dst == yi))[0]
    if hits.size == 0:
        return None
    t_jump = float(traj.times[hits[0]])
    entries, exits = traj.occupant_intervals()[xi]
    keep = exits <= t_jump + 1e-15
    return float((exits[keep] - entries[keep]).sum())


def first_passage_q(g: WeightedGraph, u: UField, x, y, rng: np.random.Generator,
                    max_jumps: int = 1_000_000) -> float:
    """Occupation time at x before the walk's first x -> y jump, simulating
    by jumps until the transition occurs (almost surely finite)."""
    xi, yi = g.vertex_index(x), g.vertex_index(y)
    u_full = u.full()
    rates = [0.5 * g.adj_weight[v] * np.exp(u_full[g.adj[v]] - u_full[v]) for v in range(g.n)]
    cum = [np.cumsum(r) for r in rates]
    cur = g.origin_index
    occupation = 0.0
    for _ in range(max_jumps):
        total = cum[cur][-1]
        dt = rng.exponential(1.0 / total)
        if cur == xi:
            occupation += dt
        target = int(g.adj[cur][np.searchsorted(cum[cur], rng.random() * total, side="right")])
        if cur == xi and target == yi:
            return occupation
        cur = target
    raise RuntimeError(f"no {x!r} -> {y!r} jump within {max_jumps} jumps")


# ---- picture equivalence ----------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    """Total-variation comparison of first-jump-path distributions.

    `bootstrap_se` is the root mean square of the total-variation statistic
    under the pooled (null) bootstrap, i.e. its typical distance from zero
    when both sides share one law; the pass criterion compares tv against a
    multiple of it. `ci` is a percentile bootstrap interval for tv itself.
    """

    k: int
    n_each: int
    tv: float
    bootstrap_se: float
    ci: tuple
    n_bootstrap: int
    vrjp_counts: dict
    rwre_counts: dict

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "n_each": self.n_each,
            "tv": self.tv,
            "bootstrap_se": self.bootstrap_se,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "n_bootstrap": self.n_bootstrap,
            "vrjp_counts": {" ".join(map(str, k)): v for k, v in self.vrjp_counts.items()},
            "rwre_counts": {" ".join(map(str, k)): v for k, v in self.rwre_counts.items()},
        }


def _tv_from_counts(ca: np.ndarray, cb: np.ndarray, n: int) -> float:
    return 0.5 * float(np.abs(ca / n - cb / n).sum())


def equivalence_test(g: WeightedGraph, k: int, n: int, field_sampler, rng: np.random.Generator,
                     n_bootstrap: int = 200) -> EquivalenceReport:
    """Compare the first k jump targets of the reinforced process against the
    environment-averaged walk.

    `field_sampler(rng) -> UField` supplies one independent environment per
    walk run. Reports the total-variation distance between the two empirical
    path laws with pooled-bootstrap calibration.
    """
    if k < 1:
        raise ValueError("need at least one jump")
    if n == 0:
        return EquivalenceReport(k, 0, 0.0, 0.0, (0.0, 0.0), n_bootstrap, {}, {})
    labs = g.labels
    counts_v: dict = {}
    counts_r: dict = {}
    for _ in range(n):
        traj = simulate_vrjp(g, np.inf, rng, max_jumps=k)
        path = tuple(labs[i] for i in traj.dst)
        counts_v[path] = counts_v.get(path, 0) + 1
    for _ in range(n):
        u = field_sampler(rng)
        traj = simulate_rwre(g, u, np.inf, rng, max_jumps=k)
        path = tuple(labs[i] for i in traj.dst)
        counts_r[path] = counts_r.get(path, 0) + 1
    support = sorted(set(counts_v) | set(counts_r))
    cv = np.array([counts_v.get(p, 0) for p in support], dtype=np.float64)
    cr = np.array([counts_r.get(p, 0) for p in support], dtype=np.float64)
    tv = _tv_from_counts(cv, cr, n)

    pooled = (cv + cr) / (2.0 * n)
    tv_null = np.empty(n_bootstrap)
    tv_boot = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        na = rng.multinomial(n, pooled)
        nb = rng.multinomial(n, pooled)
        tv_null[b] = _tv_from_counts(na.astype(float), nb.astype(float), n)
        ba = rng.multinomial(n, cv / n)
        bb = rng.multinomial(n, cr / n)
        tv_boot[b] = _tv_from_counts(ba.astype(float), bb.astype(float), n)
    se_null = float(np.sqrt(np.mean(tv_null ** 2)))
    ci = (float(np.quantile(tv_boot, 0.025)), float(np.quantile(tv_boot, 0.975)))
    return EquivalenceReport(k, n, tv, se_null, ci, n_bootstrap, counts_v, counts_r)


# ---- gradient-exceedance diagnostic ------------------------------------------------


@dataclass(frozen=True)
class DominationReport:
    """Per-edge frequencies of |u_x - u_y| >= K over sampled environments."""

    K: float
    n_samples: int
    edges: list
    frequencies: np.ndarray
    stderrs: np.ndarray

    @property
    def max_frequency(self) -> float:
        return float(self.frequencies.max()) if len(self.edges) else 0.0

    @property
    def mean_frequency(self) -> float:
        return float(self.frequencies.mean()) if len(self.edges) else 0.0

    def to_json(self) -> str:
        rows = [
            {"edge": [_j(a), _j(b)], "frequency": float(f), "stderr": float(s)}
            for (a, b), f, s in zip(self.edges, self.frequencies, self.stderrs)
        ]
        return json.dumps({"K": self.K, "n_samples": self.n_samples, "rows": rows,
                           "max_frequency": self.max_frequency,
                           "mean_frequency": self.mean_frequency}, sort_keys=True)


def _j(lab):
    return list(lab) if isinstance(lab, tuple) else lab


def domination_diagnostic(g: WeightedGraph, samples, K: float) -> DominationReport:
    """Empirical per-edge exceedance frequencies of the field gradient.

    Used to choose the gradient cutoff K empirically: at the threshold from
    `domination_threshold` the per-edge frequency is bounded by twice the
    per-direction rate.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if len(samples) == 0:
        raise ValueError("need at least one sampled field")
    u_mat = np.stack([s.full() for s in samples])
    e0, e1 = g.edges[:, 0], g.edges[:, 1]
    exceed = np.abs(u_mat[:, e0] - u_mat[:, e1]) >= K
    freq = exceed.mean(axis=0)
    n = len(samples)
    se = np.sqrt(freq * (1 - freq) / n)
    labels = [(g.labels[i], g.labels[j]) for i, j in g.edges]
    return DominationReport(float(K), n, labels, freq, se)


def domination_constants(eps: float, a: float) -> tuple[float, float]:
    """Constants (K1, K2) of the two-percolation comparison at level eps.

    K1 = a / (2 eps) makes the event {exp(u_x - u_y) >= K1 Q_xy} an
    eps-event through the rate-1 exponential law of the rescaled Q. K2 is
    the eps-quantile bound of Q implied by the exponential domination of the
    plain occupation time: with q0 = log(1/eps)/a, K2 = q0^2 + 2 q0.
    These are computed and logged, not proved.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0, 1)")
    if not a > 0:
        raise ValueError("a must be positive")
    k1 = a / (2.0 * eps)
    q0 = math.log(1.0 / eps) / a
    k2 = q0 * q0 + 2.0 * q0
    return k1, k2


def domination_threshold(eps: float, a: float) -> float:
    """Gradient cutoff K = log(K1 K2) for the per-edge exceedance bound 2 eps."""
    k1, k2 = domination_constants(eps, a)
    return math.log(k1 * k2)
