"""Bond percolation on 2D boxes: unions of two edge percolations and the
cluster-radius statistics behind the sparsity experiments.

A sample opens each box edge independently with probability eps, twice
(either independently or with the second copy a one-step lattice translate
of the first, a deliberately dependent pair), and works with the union.
Clusters are tracked with union-find; the radius of a vertex is the largest
lattice distance to any vertex of its open cluster, which is zero for
isolated vertices. Boxes clip clusters at the boundary; no wrap-around.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .unionfind import DisjointSet


class _BoxLattice:
    """Edge/vertex indexing of the {-L..L}^2 nearest-neighbour box."""

    def __init__(self, L: int):
        self.L = L
        side = 2 * L + 1
        self.vertices = [(x, y) for x in range(-L, L + 1) for y in range(-L, L + 1)]
        self.v_index = {v: i for i, v in enumerate(self.vertices)}
        edges = []
        for (x, y) in self.vertices:
            if x + 1 <= L:
                edges.append(((x, y), (x + 1, y)))
            if y + 1 <= L:
                edges.append(((x, y), (x, y + 1)))
        self.edges = edges
        self.e_index = {e: i for i, e in enumerate(edges)}
        self.m = len(edges)
        ends = np.array([[self.v_index[a], self.v_index[b]] for a, b in edges], dtype=np.int64)
        self.edge_ends = ends
        self.coords = np.array(self.vertices, dtype=np.int64)
        # translation of each edge by one lattice unit in +x, -1 if clipped
        shift = np.full(self.m, -1, dtype=np.int64)
        for eid, ((x1, y1), (x2, y2)) in enumerate(edges):
            moved = ((x1 + 1, y1), (x2 + 1, y2))
            if moved in self.e_index:
                shift[eid] = self.e_index[moved]
        self.shift_x = shift


@lru_cache(maxsize=16)
def _box_lattice(L: int) -> _BoxLattice:
    return _BoxLattice(L)


@dataclass
class PercolationSample:
    """Open-edge union of two eps-percolations on a box, with cluster bookkeeping."""

    L: int
    eps: float
    mode: str
    cp1: np.ndarray
    cp2: np.ndarray
    open_edges: np.ndarray
    _members: dict = field(default_factory=dict, repr=False)

    @property
    def lattice(self) -> _BoxLattice:
        return _box_lattice(self.L)

    def component_members(self) -> dict:
        """Vertex index -> array of vertex indices of its open component.

        Only vertices touching an open edge appear; all others are isolated.
        """
        if self._members:
            return self._members
        lat = self.lattice
        ds = DisjointSet()
        for eid in self.open_edges:
            a, b = lat.edge_ends[eid]
            ds.union(int(a), int(b))
        for root, items in ds.components().items():
            arr = np.array(items, dtype=np.int64)
            for v in items:
                self._members[v] = arr
        return self._members


def sample_union_percolation(L: int, eps: float, mode: str,
                             rng: np.random.Generator) -> PercolationSample:
    """Draw the union of two eps-percolations on the box of half-side L.

    mode "independent": the two copies are i.i.d.; mode "coupled": the second
    copy is the first translated by one lattice unit (clipped at the box).
    """
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if mode not in ("independent", "coupled"):
        raise ValueError(f"mode must be 'independent' or 'coupled', got {mode!r}")
    lat = _box_lattice(L)
    cp1 = np.nonzero(rng.random(lat.m) < eps)[0]
    if mode == "independent":
        cp2 = np.nonzero(rng.random(lat.m) < eps)[0]
    else:
        cp2 = lat.shift_x[cp1]
        cp2 = cp2[cp2 >= 0]
    open_edges = np.union1d(cp1, cp2)
    return PercolationSample(L, eps, mode, cp1, cp2, open_edges)


def sample_from_open_edges(L: int, open_edge_ids) -> PercolationSample:
    """Sample with a prescribed open-edge set; used by tests and oracles."""
    ids = np.asarray(sorted(set(int(e) for e in open_edge_ids)), dtype=np.int64)
    return PercolationSample(L, float("nan"), "manual", ids, np.array([], dtype=np.int64), ids)


def cluster_radius(sample: PercolationSample, y) -> int:
    """Largest lattice distance from y to a vertex of its open cluster (0 if isolated)."""
    lat = sample.lattice
    yi = lat.v_index[tuple(y)]
    members = sample.component_members().get(yi)
    if members is None:
        return 0
    d = np.abs(lat.coords[members] - lat.coords[yi]).sum(axis=1)
    return int(d.max())


# ---- experiments -------------------------------------------------------------------


@dataclass(frozen=True)
class RadiusTailRow:
    k: int
    p_empirical: float
    stderr: float
    bound_exp: float          # e^{-k}
    bound_path: float         # 2 * 8^k * eps^{k/2}
    violation: bool


@dataclass(frozen=True)
class RadiusTailTable:
    L: int
    eps: float
    mode: str
    n_samples: int
    seed_note: str
    rows: list

    @property
    def any_violation(self) -> bool:
        return any(r.violation for r in self.rows)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "eps", "mode", "n_samples", "seed"])
            w.writerow([self.L, self.eps, self.mode, self.n_samples, self.seed_note])
            w.writerow(["k", "p_empirical", "stderr", "bound_exp", "bound_path", "violation"])
            for r in self.rows:
                w.writerow([r.k, repr(r.p_empirical), repr(r.stderr),
                            repr(r.bound_exp), repr(r.bound_path), int(r.violation)])


def radius_tail_experiment(L: int, eps: float, n_samples: int, k_max: int,
                           rng: np.random.Generator, mode: str = "independent",
                           seed_note: str = "") -> RadiusTailTable:
    """Empirical tail of the center's cluster radius against both sparsity bounds.

    Flags a violation when the empirical tail exceeds the smaller bound by
    more than three binomial standard errors.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    radii = np.empty(n_samples, dtype=np.int64)
    center = (0, 0)
    for i in range(n_samples):
        radii[i] = cluster_radius(sample_union_percolation(L, eps, mode, rng), center)
    rows = []
    for k in range(1, k_max + 1):
        p = float(np.mean(radii >= k))
        se = math.sqrt(p * (1 - p) / n_samples)
        b_exp = math.exp(-k)
        b_path = 2.0 * 8.0 ** k * eps ** (k / 2.0)
        rows.append(RadiusTailRow(k, p, se, b_exp, b_path,
                                  p > min(b_exp, b_path) + 3.0 * se))
    return RadiusTailTable(L, eps, mode, n_samples, seed_note, rows)


@dataclass(frozen=True)
class RadiusSumReport:
    """Distribution summary of S = sum over the annulus of r(y)^2 / d(o,y)^2."""

    ell: int
    eps: float
    n_samples: int
    threshold: float          # log(ell)
    p_exceed: float
    exceed_stderr: float
    mean_s: float
    max_s: float


def radius_sum_experiment(ell: int, eps: float, n_samples: int,
                          rng: np.random.Generator,
                          mode: str = "independent") -> RadiusSumReport:
    """Exceedance frequency of the annulus radius-square sum over log(ell).

    The box half-side is ell^2 so the annulus ell <= d(o, y) <= ell^2 fits.
    """
    if ell < 2:
        raise ValueError(f"annulus parameter must be at least 2, got {ell}")
    L = ell * ell
    lat = _box_lattice(L)
    dist0 = np.abs(lat.coords).sum(axis=1)
    in_annulus = (dist0 >= ell) & (dist0 <= ell * ell)
    threshold = math.log(ell)
    values = np.empty(n_samples)
    for i in range(n_samples):
        sample = sample_union_percolation(L, eps, mode, rng)
        s_val = 0.0
        members = sample.component_members()
        done = set()
        for v, comp in members.items():
            if v in done or not in_annulus[v]:
                done.add(v)
                continue
            d = np.abs(lat.coords[comp][:, None, :] - lat.coords[comp][None, :, :]).sum(axis=2)
            radii = d.max(axis=1)
            for vv, r in zip(comp, radii):
                if in_annulus[vv]:
                    s_val += float(r) ** 2 / float(dist0[vv]) ** 2
                done.add(int(vv))
        values[i] = s_val
    p = float(np.mean(values >= threshold))
    se = math.sqrt(p * (1 - p) / n_samples)
    return RadiusSumReport(ell, eps, n_samples, threshold, p, se,
                           float(values.mean()), float(values.max()))
