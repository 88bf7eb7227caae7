"""Bookkeeping quantities of the slow-deformation comparison argument.

Everything here is computed on an L1 ball H around the origin: a three-regime
radial target function tau (zero near the origin, logarithmic in the middle,
constant outside a quarter of the reference distance), its local decrements
tau', the Lipschitz scale of tau at a gradient cutoff, and the cluster
statistics of the random edge set where a field's gradient exceeds the
cutoff. The deformation maps themselves are out of scope; only their input
quantities are provided.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .graphs import WeightedGraph, ball_2d
from .unionfind import DisjointSet


@dataclass(frozen=True)
class TargetFunction:
    """Radial target on the ball H of radius floor(d_ox / 2) around the origin."""

    d_ox: int
    lam: float
    ball: WeightedGraph
    tau: np.ndarray          # per-vertex values, indexed like ball vertices

    def value(self, vertex) -> float:
        return float(self.tau[self.ball.vertex_index(vertex)])


def tau_of_distance(d: float, d_ox: int, lam: float) -> float:
    """The three-regime radial profile as a function of real distance.

    The plateau is the middle branch evaluated at its boundary, so the
    profile is continuous exactly, not merely up to rounding.
    """
    root = math.sqrt(d_ox)
    if d < root:
        return 0.0
    if d < d_ox / 4.0:
        return lam * math.log(d / root)
    return lam * math.log((d_ox / 4.0) / root)


def build_tau(d_ox: int, lam: float) -> TargetFunction:
    """Target function for a reference vertex at distance d_ox from the origin."""
    if d_ox < 4:
        raise ValueError(f"reference distance must be at least 4, got {d_ox}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    ball = ball_2d(d_ox // 2)
    dist0 = ball.distances_from((0, 0))
    tau = np.array([tau_of_distance(float(d), d_ox, lam) for d in dist0])
    return TargetFunction(d_ox, lam, ball, tau)


def tau_prime(target: TargetFunction, v, k: int) -> float:
    """Largest decrement max{tau_v - tau_w : d(v, w) <= k}; nonnegative since w = v counts."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    ball = target.ball
    d = ball.distances_from(v)
    return float(target.tau[ball.vertex_index(v)] - target.tau[d <= k].min())


def lipschitz_scale(target: TargetFunction, K: float) -> int:
    """Largest k such that d(v, w) < k implies |tau_v - tau_w| <= K/2.

    Exact pairwise scan in distance-chunked form. When no pair violates the
    bound the scale is the ball diameter plus one.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    ball = target.ball
    coords = ball.coords
    tau = target.tau
    n = ball.n
    min_violation = None
    chunk = max(1, 2_000_000 // max(n, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d = np.abs(coords[lo:hi, None, :] - coords[None, :, :]).sum(axis=2)
        viol = np.abs(tau[lo:hi, None] - tau[None, :]) > 0.5 * K
        if viol.any():
            m = int(d[viol].min())
            min_violation = m if min_violation is None else min(min_violation, m)
    if min_violation is None:
        return 2 * (target.d_ox // 2) + 1
    return min_violation


@dataclass(frozen=True)
class ComponentStats:
    """Clusters of the edge set where a field's gradient exceeds the cutoff K."""

    K: float
    exceed_edges: list        # (label, label) pairs
    r: np.ndarray             # per-vertex max distance to a cluster member
    M: int                    # max distance over connected pairs

    def write_csv(self, target: TargetFunction, path):
        """Diagnostic dump: one row per vertex (vertex, tau, r, in-EC-degree)."""
        ball = target.ball
        deg = {}
        for a, b in self.exceed_edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex", "tau", "r", "ec_degree"])
            for i, lab in enumerate(ball.labels):
                w.writerow([lab, repr(float(target.tau[i])), int(self.r[i]),
                            deg.get(lab, 0)])


def component_stats(ball: WeightedGraph, phi: np.ndarray, K: float) -> ComponentStats:
    """Exceedance-edge clusters of the field phi (indexed like ball vertices).

    r(v) is the largest graph distance from v to a vertex connected to it by
    exceedance edges (zero for isolated vertices, every vertex being
    connected to itself); M is the largest distance over connected pairs and
    equals the maximum of r.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (ball.n,):
        raise ValueError(f"field must have one value per ball vertex, got {phi.shape}")
    e0, e1 = ball.edges[:, 0], ball.edges[:, 1]
    exceed = np.abs(phi[e0] - phi[e1]) >= K
    ds = DisjointSet()
    for i, j in ball.edges[exceed]:
        ds.union(int(i), int(j))
    r = np.zeros(ball.n, dtype=np.int64)
    coords = ball.coords
    for comp in ds.components().values():
        arr = np.array(comp, dtype=np.int64)
        d = np.abs(coords[arr][:, None, :] - coords[arr][None, :, :]).sum(axis=2)
        r[arr] = d.max(axis=1)
    labels = [(ball.labels[i], ball.labels[j]) for i, j in ball.edges[exceed]]
    return ComponentStats(float(K), labels, r, int(r.max()) if ball.n else 0)
