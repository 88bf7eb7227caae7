"""The random-environment density of the reinforced walk and its determinant term.

The density lives on fields u pinned to zero at the origin. Its log is

    -sum_x u_x  -  sum_{xy} W_xy (cosh(u_x - u_y) - 1)  +  (1/2) log D(W, u)
    - ((|G|-1)/2) log(2 pi)

where D(W, u) is any diagonal minor of the graph Laplacian built from the
conductances W_xy exp(u_x + u_y). The minor value does not depend on which
vertex is removed, and by the matrix-tree theorem it equals the sum over
spanning trees of the product of tree-edge conductances; both facts are
exercised by the test suite.

Determinants are evaluated in log domain after symmetric rescaling by
diag(exp(-u)): the rescaled minor has entries built from exp(u_z - u_a),
so only gradient-sized exponents ever enter the factorization.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .graphs import WeightedGraph
from .unionfind import DisjointSet

LOG_2PI = float(np.log(2.0 * np.pi))


class NumericalDegeneracyError(RuntimeError):
    """The minor factorization failed; the field is numerically out of range."""


class UField:
    """Environment field u: vertex -> real with the origin pinned to zero.

    Stores one value per non-origin vertex, in graph vertex order.
    """

    __slots__ = ("graph", "values")

    def __init__(self, graph: WeightedGraph, values):
        self.graph = graph
        vals = np.asarray(values, dtype=np.float64)
        if vals.shape != (graph.n - 1,):
            raise ValueError(f"expected {graph.n - 1} values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        self.values = vals

    @classmethod
    def zeros(cls, graph: WeightedGraph) -> "UField":
        return cls(graph, np.zeros(graph.n - 1))

    @classmethod
    def from_dict(cls, graph: WeightedGraph, mapping) -> "UField":
        full = np.zeros(graph.n)
        for lab, val in mapping.items():
            full[graph.vertex_index(lab)] = val
        if abs(full[graph.origin_index]) > 0:
            raise ValueError("the origin value is pinned to zero")
        keep = np.arange(graph.n) != graph.origin_index
        return cls(graph, full[keep])

    def full(self) -> np.ndarray:
        """Values over all vertices in graph order, zero at the origin."""
        out = np.zeros(self.graph.n)
        keep = np.arange(self.graph.n) != self.graph.origin_index
        out[keep] = self.values
        return out

    def value(self, vertex) -> float:
        return float(self.full()[self.graph.vertex_index(vertex)])

    def to_dict(self) -> dict:
        full = self.full()
        return {lab: float(full[i]) for i, lab in enumerate(self.graph.labels)}


class DensityModel:
    """Density of the environment field on a fixed graph.

    `removed_vertex` selects the diagonal minor used for the determinant;
    the origin by default, configurable to exercise minor invariance.
    """

    def __init__(self, graph: WeightedGraph, removed_vertex=None):
        self.graph = graph
        self.removed_vertex = graph.origin if removed_vertex is None else removed_vertex
        if self.removed_vertex not in graph.index:
            raise ValueError(f"removed vertex {self.removed_vertex!r} is not in the graph")
        self.removed_index = graph.vertex_index(self.removed_vertex)
        n = graph.n
        self.free_u = np.array([i for i in range(n) if i != graph.origin_index], dtype=np.int64)
        self.minor_idx = np.array([i for i in range(n) if i != self.removed_index], dtype=np.int64)
        # position of each graph vertex inside the minor, -1 for the removed one
        self.minor_pos = np.full(n, -1, dtype=np.int64)
        self.minor_pos[self.minor_idx] = np.arange(n - 1)

    # ---- building blocks ----------------------------------------------------

    def conductances(self, u_full: np.ndarray) -> np.ndarray:
        """Per-edge conductance W_xy exp(u_x + u_y)."""
        e = self.graph.edges
        return self.graph.weights * np.exp(u_full[e[:, 0]] + u_full[e[:, 1]])

    def scaled_minor(self, u_full: np.ndarray) -> np.ndarray:
        """Minor conjugated by diag(exp(-u)); log det differs by -2 sum_F u."""
        g = self.graph
        n1 = g.n - 1
        m = np.zeros((n1, n1))
        pos = self.minor_pos
        for (i, j), w in zip(g.edges, g.weights):
            pi, pj = pos[i], pos[j]
            if pi >= 0 and pj >= 0:
                m[pi, pj] -= w
                m[pj, pi] -= w
            di = w * np.exp(u_full[j] - u_full[i])
            dj = w * np.exp(u_full[i] - u_full[j])
            if pi >= 0:
                m[pi, pi] += di
            if pj >= 0:
                m[pj, pj] += dj
        return m


def laplacian_matrix(model: DensityModel, u: UField) -> np.ndarray:
    """Full graph Laplacian with conductance entries; rows sum to zero."""
    g = model.graph
    u_full = u.full()
    a = np.zeros((g.n, g.n))
    c = model.conductances(u_full)
    for (i, j), ce in zip(g.edges, c):
        a[i, j] -= ce
        a[j, i] -= ce
        a[i, i] += ce
        a[j, j] += ce
    return a


def log_minor_determinant(model: DensityModel, u: UField) -> float:
    """log D(W, u) through a Cholesky factorization of the rescaled minor."""
    u_full = u.full()
    m = model.scaled_minor(u_full)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(f"minor factorization failed: {exc}") from exc
    return 2.0 * float(np.sum(u_full[model.minor_idx])) + 2.0 * float(np.log(np.diag(chol)).sum())


def minor_determinant(model: DensityModel, u: UField) -> float:
    """D(W, u) as a positive real; overflows only far beyond desk scale."""
    return float(np.exp(log_minor_determinant(model, u)))


def spanning_tree_sum(model: DensityModel, u: UField, cap: int = 8) -> float:
    """Sum over spanning trees of the product of tree-edge conductances.

    Exhaustive enumeration, usable as an independent oracle for the minor
    determinant on graphs with at most `cap` vertices.
    """
    g = model.graph
    if g.n > cap:
        raise ValueError(f"graph has {g.n} vertices, above the enumeration cap {cap}")
    c = model.conductances(u.full())
    if g.n == 1:
        return 1.0
    total = 0.0
    edge_ids = range(g.m)
    for subset in combinations(edge_ids, g.n - 1):
        ds = DisjointSet()
        ok = True
        for eid in subset:
            i, j = g.edges[eid]
            if not ds.union(int(i), int(j)):
                ok = False
                break
        if ok:
            total += float(np.prod(c[list(subset)]))
    return total


def log_density(model: DensityModel, u: UField) -> float:
    """Log of the normalized environment density at u."""
    g = model.graph
    u_full = u.full()
    du = u_full[g.edges[:, 0]] - u_full[g.edges[:, 1]]
    interaction = float(np.sum(g.weights * (np.cosh(du) - 1.0)))
    return (
        -float(u_full.sum())
        - interaction
        + 0.5 * log_minor_determinant(model, u)
        - 0.5 * (g.n - 1) * LOG_2PI
    )


def _grounded_inverse(model: DensityModel, u_full: np.ndarray) -> np.ndarray:
    """Inverse of the minor, zero-extended at the removed vertex (n x n)."""
    m = model.scaled_minor(u_full)
    try:
        minv = np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(f"minor inversion failed: {exc}") from exc
    # undo the diag(exp(-u)) conjugation: inv(E M~ E) = E^-1 inv(M~) E^-1
    scale = np.exp(-u_full[model.minor_idx])
    minv = minv * np.outer(scale, scale)
    g = np.zeros((model.graph.n, model.graph.n))
    g[np.ix_(model.minor_idx, model.minor_idx)] = minv
    return g


def grad_log_minor(model: DensityModel, u: UField) -> np.ndarray:
    """Gradient of log D in the non-origin coordinates.

    Uses one factorization: the derivative with respect to u_x is the sum
    over edges at x of conductance times effective resistance, i.e. the
    expected degree of x under the weighted spanning-tree measure.
    """
    g = model.graph
    u_full = u.full()
    green = _grounded_inverse(model, u_full)
    c = model.conductances(u_full)
    e0, e1 = g.edges[:, 0], g.edges[:, 1]
    r_eff = green[e0, e0] + green[e1, e1] - 2.0 * green[e0, e1]
    marg = c * r_eff
    out = np.zeros(g.n)
    np.add.at(out, e0, marg)
    np.add.at(out, e1, marg)
    return out[model.free_u]


def grad_log_density(model: DensityModel, u: UField) -> np.ndarray:
    """Exact gradient of log_density over the non-origin vertices."""
    g = model.graph
    u_full = u.full()
    du = u_full[g.edges[:, 0]] - u_full[g.edges[:, 1]]
    sinh_term = g.weights * np.sinh(du)
    out = np.zeros(g.n)
    np.add.at(out, g.edges[:, 0], -sinh_term)
    np.add.at(out, g.edges[:, 1], sinh_term)
    return -1.0 + out[model.free_u] + 0.5 * grad_log_minor(model, u)


def hessian_log_minor(model: DensityModel, u: UField, cap: int = 64) -> np.ndarray:
    """Dense Hessian of log D in the non-origin coordinates; positive semi-definite.

    With v_e the signed incidence vector of edge e grounded at the removed
    vertex, log D = log det(sum_e c_e v_e v_e^T), so

        d2 log D / du_x du_y = sum_e c_e [x in e][y in e] (v_e^T G v_e)
                               - sum_{e,f} c_e c_f [x in e][y in f] (v_e^T G v_f)^2.
    """
    g = model.graph
    if g.n > cap:
        raise ValueError(f"graph has {g.n} vertices, above the dense-Hessian cap {cap}")
    u_full = u.full()
    green = _grounded_inverse(model, u_full)
    c = model.conductances(u_full)
    e0, e1 = g.edges[:, 0], g.edges[:, 1]
    # T[e, f] = v_e^T G v_f via pairwise Green entries
    t = (green[np.ix_(e0, e0)] - green[np.ix_(e0, e1)]
         - green[np.ix_(e1, e0)] + green[np.ix_(e1, e1)])
    # incidence indicator restricted to non-origin coordinates
    p = np.zeros((g.m, g.n))
    p[np.arange(g.m), e0] = 1.0
    p[np.arange(g.m), e1] = 1.0
    p = p[:, model.free_u]
    core = np.diag(c * np.diag(t)) - (c[:, None] * t * c[None, :]) * t
    h = p.T @ core @ p
    return 0.5 * (h + h.T)
