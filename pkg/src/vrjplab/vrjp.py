"""Exact event-driven simulation of the vertex-reinforced jump process.

While the walker sits at x, the jump rate toward a neighbour y is the edge
weight times y's current local time, and local times of vertices other than
x are frozen; the rates are therefore constant within each sojourn, so the
process is simulated exactly: exponential holding time at the total rate,
then a categorical jump draw. No time discretization anywhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graphs import WeightedGraph


@dataclass(frozen=True)
class VrjpTrajectory:
    """Ordered jump events of one run, plus the horizon of the final partial sojourn.

    `times` are strictly increasing jump times; jump k moves the walker from
    `src[k]` to `dst[k]` (vertex indices). The walker starts at `start` at
    time 0 and occupies `dst[-1]` (or `start`) through `horizon`.
    """

    graph: WeightedGraph
    start: int
    times: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    horizon: float
    _sojourns: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    def jump_chain(self) -> list:
        """Visited vertex labels in order, starting from the initial vertex."""
        labs = self.graph.labels
        return [labs[self.start]] + [labs[i] for i in self.dst]

    def occupant_intervals(self):
        """Per-vertex sojourn intervals as {vertex_index: (entries, exits) arrays}."""
        if self._sojourns:
            return self._sojourns
        entries: dict[int, list] = {}
        exits: dict[int, list] = {}
        cur = self.start
        t = 0.0
        for k in range(self.n_jumps):
            entries.setdefault(cur, []).append(t)
            exits.setdefault(cur, []).append(float(self.times[k]))
            cur = int(self.dst[k])
            t = float(self.times[k])
        entries.setdefault(cur, []).append(t)
        exits.setdefault(cur, []).append(float(self.horizon))
        for v in entries:
            self._sojourns[v] = (np.asarray(entries[v]), np.asarray(exits[v]))
        return self._sojourns


def simulate_vrjp(g: WeightedGraph, horizon: float, rng: np.random.Generator,
                  max_jumps: int | None = None) -> VrjpTrajectory:
    """Simulate the reinforced jump process started at the origin.

    Stops at `horizon` (the partial final sojourn is part of the trajectory)
    or after `max_jumps` jumps, whichever comes first. With `max_jumps` set
    and an infinite horizon the recorded horizon is the last jump time.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    local = np.ones(g.n)
    cur = g.origin_index
    t = 0.0
    times: list[float] = []
    src: list[int] = []
    dst: list[int] = []
    while True:
        if max_jumps is not None and len(times) >= max_jumps:
            break
        nbrs = g.adj[cur]
        if nbrs.size == 0:
            break
        rates = g.adj_weight[cur] * local[nbrs]
        total = rates.sum()
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            break
        t += dt
        local[cur] += dt
        target = int(nbrs[np.searchsorted(np.cumsum(rates), rng.random() * total)])
        times.append(t)
        src.append(cur)
        dst.append(target)
        cur = target
    end = horizon if np.isfinite(horizon) else (times[-1] if times else 0.0)
    return VrjpTrajectory(g, g.origin_index, np.asarray(times), np.asarray(src, dtype=np.int64),
                          np.asarray(dst, dtype=np.int64), float(end))


class LocalTimeVector:
    """Local times of a trajectory, evaluable at any time up to the horizon.

    The local time of y starts at 1 and grows with slope 1 exactly while the
    walker occupies y.
    """

    def __init__(self, traj: VrjpTrajectory):
        self.traj = traj
        self._intervals = traj.occupant_intervals()

    def value(self, vertex, t: float) -> float:
        """L_y(t) for a vertex label (or index) at time t <= horizon."""
        if not 0 <= t <= self.traj.horizon + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.traj.horizon}]")
        v = vertex if isinstance(vertex, (int, np.integer)) else self.traj.graph.vertex_index(vertex)
        iv = self._intervals.get(int(v))
        if iv is None:
            return 1.0
        entries, exits = iv
        occupied = np.minimum(exits, t) - np.minimum(entries, t)
        return 1.0 + float(occupied[occupied > 0].sum())

    def vector_at(self, t: float) -> np.ndarray:
        """All local times at time t, indexed like the graph vertices."""
        out = np.ones(self.traj.graph.n)
        for v in self._intervals:
            out[v] = self.value(v, t)
        return out


class TimeChangeRecord:
    """The quadratic time change D(t) = sum_x (L_x(t)^2 - 1) and its inverse.

    D is piecewise quadratic: between consecutive jumps only the occupant's
    local time grows, so on each piece D(t) = D(t_k) + 2 L (t - t_k) + (t - t_k)^2
    with L the occupant's local time at the piece start.
    """

    def __init__(self, traj: VrjpTrajectory):
        self.traj = traj
        times = np.concatenate(([0.0], traj.times))
        n_pieces = len(times)
        occ_local = np.empty(n_pieces)
        d_at = np.empty(n_pieces)
        local = np.ones(traj.graph.n)
        cur = traj.start
        d = 0.0
        for k in range(n_pieces):
            occ_local[k] = local[cur]
            d_at[k] = d
            t0 = times[k]
            t1 = times[k + 1] if k + 1 < n_pieces else traj.horizon
            dt = t1 - t0
            d += 2.0 * local[cur] * dt + dt * dt
            local[cur] += dt
            if k + 1 < n_pieces:
                cur = int(traj.dst[k])
        self.piece_start = times
        self.piece_local = occ_local
        self.piece_d = d_at
        self.d_horizon = d

    def d(self, t: float) -> float:
        """Evaluate D at t in [0, horizon]."""
        if not 0 <= t <= self.traj.horizon + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.traj.horizon}]")
        k = int(np.searchsorted(self.piece_start, t, side="right") - 1)
        dt = t - self.piece_start[k]
        return float(self.piece_d[k] + 2.0 * self.piece_local[k] * dt + dt * dt)

    def inverse(self, s: float) -> float:
        """The time t with D(t) = s, for s in [0, D(horizon)]."""
        if not 0 <= s <= self.d_horizon + 1e-9:
            raise ValueError(f"time-changed instant {s} outside [0, {self.d_horizon}]")
        k = int(np.searchsorted(self.piece_d, s, side="right") - 1)
        L = self.piece_local[k]
        ds = s - self.piece_d[k]
        # solve dt^2 + 2 L dt = ds for dt >= 0
        dt = -L + np.sqrt(L * L + ds)
        return float(self.piece_start[k] + dt)


def time_change(traj: VrjpTrajectory) -> TimeChangeRecord:
    """Exact piecewise-quadratic time change of a trajectory."""
    return TimeChangeRecord(traj)


class QStat(NamedTuple):
    q: float
    Q: float


def q_statistics(traj: VrjpTrajectory, x, y) -> QStat | None:
    """Occupation statistics of x before its first jump to y.

    q is the plain time spent at x up to that jump; Q is the corresponding
    time spent by the time-changed process, computed through the time change.
    Returns None when the trajectory contains no x -> y jump.
    """
    g = traj.graph
    xi, yi = g.vertex_index(x), g.vertex_index(y)
    hits = np.nonzero((traj.src == xi) & (traj.dst == yi))[0]
    if hits.size == 0:
        return None
    t_jump = float(traj.times[hits[0]])
    entries, exits = traj.occupant_intervals()[xi]
    keep = exits <= t_jump + 1e-15
    q = float((exits[keep] - entries[keep]).sum())
    tc = time_change(traj)
    Q = float(sum(tc.d(b) - tc.d(a) for a, b in zip(entries[keep], exits[keep])))
    return QStat(q=q, Q=Q)


def write_trajectory_csv(traj: VrjpTrajectory, path, local_times_at_horizon: bool = False,
                         metadata: dict | None = None):
    """Export jump events as CSV rows (jump_index, time, from, to).

    With `local_times_at_horizon`, appends one (vertex, local_time) block
    recording the full local-time vector at the horizon. `metadata` entries
    are written first as `# key=value` comment lines.
    """
    lt = LocalTimeVector(traj) if local_times_at_horizon else None
    with open(path, "w", newline="") as fh:
        for key in sorted(metadata or {}):
            fh.write(f"# {key}={metadata[key]}\n")
        w = csv.writer(fh)
        w.writerow(["jump_index", "time", "from", "to"])
        labs = traj.graph.labels
        for k in range(traj.n_jumps):
            w.writerow([k, repr(float(traj.times[k])), labs[traj.src[k]], labs[traj.dst[k]]])
        if lt is not None:
            w.writerow([])
            w.writerow(["vertex", "local_time_at_horizon"])
            vec = lt.vector_at(traj.horizon)
            for i, lab in enumerate(labs):
                w.writerow([lab, repr(float(vec[i]))])
