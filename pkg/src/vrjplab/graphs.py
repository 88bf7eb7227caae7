"""Finite weighted graphs, 2D lattice builders, and graph distances.

Vertices are identified by hashable labels: integer coordinate pairs for
lattice vertices, the string "delta" for the wired boundary vertex, plain
integers for abstract test graphs. Internally everything is indexed 0..n-1
for the numeric kernels.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

DELTA = "delta"


@dataclass(frozen=True)
class BoxSpec:
    """Parameters of a 2D box graph: half-side, uniform weight, wiring flag."""

    L: int
    a: float
    wired: bool = False

    def __post_init__(self):
        if self.L < 0:
            raise ValueError(f"box half-side must be nonnegative, got {self.L}")
        if not self.a > 0:
            raise ValueError(f"edge weight must be positive, got {self.a}")

    def build(self) -> "WeightedGraph":
        return build_wired_box(self.L, self.a) if self.wired else build_box_2d(self.L, self.a)


class WeightedGraph:
    """Finite connected graph with positive edge weights and a distinguished origin.

    Immutable after construction; safe to share across parallel workers.
    `l1_distances` marks graphs (plain boxes, L1 balls) whose induced graph
    distance provably equals the L1 distance of coordinates, enabling an O(1)
    distance path; the wired box has shortcuts through delta and uses BFS.
    """

    def __init__(self, labels, edges, weights, origin, coords=None, l1_distances=False):
        self.labels = list(labels)
        self.n = len(self.labels)
        if self.n == 0:
            raise ValueError("graph needs at least one vertex")
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != self.n:
            raise ValueError("duplicate vertex labels")

        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.edges.shape[0] != self.weights.shape[0]:
            raise ValueError("edges and weights length mismatch")
        if np.any(self.weights <= 0):
            raise ValueError("edge weights must be positive")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self-loops not allowed")
        self.m = self.edges.shape[0]

        if origin not in self.index:
            raise ValueError(f"origin {origin!r} is not a vertex")
        self.origin = origin
        self.origin_index = self.index[origin]

        # coords: (n, 2) int array; has_coords marks vertices that carry them
        self.coords = np.zeros((self.n, 2), dtype=np.int64)
        self.has_coords = np.zeros(self.n, dtype=bool)
        if coords is not None:
            for lab, xy in coords.items():
                i = self.index[lab]
                self.coords[i] = xy
                self.has_coords[i] = True
        self.l1_distances = bool(l1_distances) and bool(self.has_coords.all())

        self._build_adjacency()
        self._check_connected()
        self._dist_cache: dict[int, np.ndarray] = {}

    def _build_adjacency(self):
        nbr = [[] for _ in range(self.n)]
        nbr_w = [[] for _ in range(self.n)]
        nbr_e = [[] for _ in range(self.n)]
        seen = set()
        for eid, ((i, j), w) in enumerate(zip(self.edges, self.weights)):
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge between {self.labels[i]!r} and {self.labels[j]!r}")
            seen.add(key)
            nbr[i].append(j)
            nbr[j].append(i)
            nbr_w[i].append(w)
            nbr_w[j].append(w)
            nbr_e[i].append(eid)
            nbr_e[j].append(eid)
        self.adj = [np.array(a, dtype=np.int64) for a in nbr]
        self.adj_weight = [np.array(a, dtype=np.float64) for a in nbr_w]
        self.adj_edge = [np.array(a, dtype=np.int64) for a in nbr_e]

    def _check_connected(self):
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for w in self.adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        if not seen.all():
            raise ValueError("graph is not connected")

    # ---- basic queries -----------------------------------------------------

    def vertex_index(self, label) -> int:
        return self.index[label]

    def degree(self, label) -> int:
        return len(self.adj[self.index[label]])

    def edge_weight(self, x, y) -> float:
        i, j = self.index[x], self.index[y]
        pos = np.nonzero(self.adj[i] == j)[0]
        if pos.size == 0:
            raise KeyError(f"no edge between {x!r} and {y!r}")
        return float(self.adj_weight[i][pos[0]])

    @property
    def is_tree(self) -> bool:
        return self.m == self.n - 1

    # ---- distances ----------------------------------------------------------

    def distances_from(self, x) -> np.ndarray:
        """Unweighted shortest-path distances from x to every vertex."""
        src = self.index[x]
        cached = self._dist_cache.get(src)
        if cached is not None:
            return cached
        if self.l1_distances:
            d = np.abs(self.coords - self.coords[src]).sum(axis=1)
        else:
            d = np.full(self.n, -1, dtype=np.int64)
            d[src] = 0
            q = deque([src])
            while q:
                v = q.popleft()
                for w in self.adj[v]:
                    if d[w] < 0:
                        d[w] = d[v] + 1
                        q.append(int(w))
        self._dist_cache[src] = d
        return d

    def distance(self, x, y) -> int:
        return int(self.distances_from(x)[self.index[y]])

    def ball(self, x, radius) -> list:
        """Labels of the closed ball of the given radius around x."""
        d = self.distances_from(x)
        return [self.labels[i] for i in np.nonzero(d <= radius)[0]]

    def diameter(self) -> int:
        return max(int(self.distances_from(lab).max()) for lab in self.labels)

    # ---- serialization -------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "vertices": [
                {"label": _label_out(lab), "coords": self.coords[i].tolist() if self.has_coords[i] else None}
                for i, lab in enumerate(self.labels)
            ],
            "edges": [
                {"u": _label_out(self.labels[i]), "v": _label_out(self.labels[j]), "w": float(w)}
                for (i, j), w in zip(self.edges, self.weights)
            ],
            "origin": _label_out(self.origin),
            "l1_distances": self.l1_distances,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WeightedGraph":
        doc = json.loads(text)
        labels = [_label_in(v["label"]) for v in doc["vertices"]]
        coords = {
            _label_in(v["label"]): tuple(v["coords"])
            for v in doc["vertices"]
            if v["coords"] is not None
        }
        index = {lab: i for i, lab in enumerate(labels)}
        edges = [(index[_label_in(e["u"])], index[_label_in(e["v"])]) for e in doc["edges"]]
        weights = [e["w"] for e in doc["edges"]]
        return cls(labels, edges, weights, _label_in(doc["origin"]), coords=coords,
                   l1_distances=doc.get("l1_distances", False))


def _label_out(lab):
    return list(lab) if isinstance(lab, tuple) else lab


def _label_in(lab):
    return tuple(lab) if isinstance(lab, list) else lab


def graph_distance(g: WeightedGraph, x, y) -> int:
    """Unweighted shortest-path distance between vertices x and y."""
    return g.distance(x, y)


# ---- builders ----------------------------------------------------------------


def build_box_2d(L: int, a: float) -> WeightedGraph:
    """Box {-L..L}^2 with nearest-neighbour edges of uniform weight a, origin (0,0)."""
    if L < 0:
        raise ValueError(f"box half-side must be nonnegative, got {L}")
    if not a > 0:
        raise ValueError(f"edge weight must be positive, got {a}")
    labels = [(x, y) for x in range(-L, L + 1) for y in range(-L, L + 1)]
    index = {lab: i for i, lab in enumerate(labels)}
    edges = []
    for (x, y) in labels:
        if (x + 1, y) in index:
            edges.append((index[(x, y)], index[(x + 1, y)]))
        if (x, y + 1) in index:
            edges.append((index[(x, y)], index[(x, y + 1)]))
    coords = {lab: lab for lab in labels}
    return WeightedGraph(labels, edges, [a] * len(edges), (0, 0), coords=coords,
                         l1_distances=True)


def build_wired_box(L: int, a: float) -> WeightedGraph:
    """Box plus a single boundary vertex wired to every box-boundary site.

    Corner-to-delta edges carry weight 2a (they stand for the two outward
    lattice edges merged by the wiring); all other edges carry weight a.
    """
    if L < 1:
        raise ValueError(f"wired box needs half-side >= 1, got {L}")
    if not a > 0:
        raise ValueError(f"edge weight must be positive, got {a}")
    box = build_box_2d(L, a)
    labels = box.labels + [DELTA]
    edges = [tuple(e) for e in box.edges]
    weights = list(box.weights)
    delta_idx = len(box.labels)
    for i, (x, y) in enumerate(box.labels):
        if abs(x) == L or abs(y) == L:
            corner = abs(x) == L and abs(y) == L
            edges.append((i, delta_idx))
            weights.append(2 * a if corner else a)
    coords = {lab: lab for lab in box.labels}
    return WeightedGraph(labels, edges, weights, (0, 0), coords=coords)


def ball_2d(radius: int, a: float = 1.0) -> WeightedGraph:
    """Induced subgraph of Z^2 on the closed L1 ball of the given radius, origin (0,0)."""
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    if not a > 0:
        raise ValueError(f"edge weight must be positive, got {a}")
    labels = [(x, y) for x in range(-radius, radius + 1)
              for y in range(-radius, radius + 1) if abs(x) + abs(y) <= radius]
    index = {lab: i for i, lab in enumerate(labels)}
    edges = []
    for (x, y) in labels:
        if (x + 1, y) in index:
            edges.append((index[(x, y)], index[(x + 1, y)]))
        if (x, y + 1) in index:
            edges.append((index[(x, y)], index[(x, y + 1)]))
    coords = {lab: lab for lab in labels}
    return WeightedGraph(labels, edges, [a] * len(edges), (0, 0), coords=coords,
                         l1_distances=True)


def from_edge_list(edge_weights, origin) -> WeightedGraph:
    """Graph from a list of (u, v, w) triples; vertex set inferred."""
    labels = []
    seen = set()
    for u, v, _ in edge_weights:
        for lab in (u, v):
            if lab not in seen:
                seen.add(lab)
                labels.append(lab)
    if origin not in seen:
        labels.insert(0, origin)
    index = {lab: i for i, lab in enumerate(labels)}
    edges = [(index[u], index[v]) for u, v, _ in edge_weights]
    weights = [w for _, _, w in edge_weights]
    return WeightedGraph(labels, edges, weights, origin)


def path_graph(k: int, a: float = 1.0) -> WeightedGraph:
    """Path on vertices 0..k-1 with uniform weight, origin 0."""
    if k < 1:
        raise ValueError("path needs at least one vertex")
    if k == 1:
        return WeightedGraph([0], [], [], 0)
    return from_edge_list([(i, i + 1, a) for i in range(k - 1)], 0)


def cycle_graph(k: int, a: float = 1.0) -> WeightedGraph:
    if k < 3:
        raise ValueError("cycle needs at least three vertices")
    return from_edge_list([(i, (i + 1) % k, a) for i in range(k)], 0)


def complete_graph(k: int, a: float = 1.0) -> WeightedGraph:
    if k < 2:
        raise ValueError("complete graph needs at least two vertices")
    return from_edge_list([(i, j, a) for i in range(k) for j in range(i + 1, k)], 0)


def star_graph(k: int, a: float = 1.0) -> WeightedGraph:
    """Star with origin 0 at the center and k leaves 1..k."""
    if k < 1:
        raise ValueError("star needs at least one leaf")
    return from_edge_list([(0, i, a) for i in range(1, k + 1)], 0)
