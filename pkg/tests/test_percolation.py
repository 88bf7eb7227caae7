"""Edge percolation unions, cluster radii, tail and annulus experiments."""

import math
from collections import deque

import numpy as np
import pytest

from vrjplab.percolation import (_box_lattice, cluster_radius,
                                 radius_sum_experiment, radius_tail_experiment,
                                 sample_from_open_edges, sample_union_percolation)


def bfs_component(lat, open_ids, start):
    """Oracle: component of `start` by BFS over open edges."""
    adj = {}
    for eid in open_ids:
        a, b = (int(v) for v in lat.edge_ends[eid])
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    comp = {start}
    q = deque([start])
    while q:
        v = q.popleft()
        for w in adj.get(v, []):
            if w not in comp:
                comp.add(w)
                q.append(w)
    return comp


def test_trivial_epsilons():
    rng = np.random.default_rng(0)
    empty = sample_union_percolation(5, 0.0, "independent", rng)
    assert empty.open_edges.size == 0
    full = sample_union_percolation(5, 1.0, "independent", rng)
    assert full.open_edges.size == full.lattice.m


def test_rejects_bad_args():
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError):
        sample_union_percolation(5, -0.1, "independent", rng)
    with pytest.raises(ValueError):
        sample_union_percolation(5, 1.1, "independent", rng)
    with pytest.raises(ValueError):
        sample_union_percolation(5, 0.5, "weird", rng)


def test_union_edge_probability():
    # each edge is open in the union with probability 2 eps - eps^2
    eps = 0.1
    rng = np.random.default_rng(2)
    lat = _box_lattice(3)
    n = 4000
    hits = np.zeros(lat.m)
    for _ in range(n):
        s = sample_union_percolation(3, eps, "independent", rng)
        hits[s.open_edges] += 1
    target = 2 * eps - eps * eps
    overall = hits.sum() / (n * lat.m)
    se = math.sqrt(target * (1 - target) / (n * lat.m))
    assert abs(overall - target) < 4 * se
    per_edge_se = math.sqrt(target * (1 - target) / n)
    assert np.abs(hits / n - target).max() < 5 * per_edge_se


def test_coupled_mode_is_a_translate():
    rng = np.random.default_rng(3)
    lat = _box_lattice(4)
    for _ in range(20):
        s = sample_union_percolation(4, 0.15, "coupled", rng)
        expected = lat.shift_x[s.cp1]
        expected = np.sort(expected[expected >= 0])
        assert np.array_equal(np.sort(s.cp2), expected)


def test_cluster_radius_examples():
    lat = _box_lattice(3)
    empty = sample_from_open_edges(3, [])
    assert cluster_radius(empty, (0, 0)) == 0
    eid = lat.e_index[((0, 0), (1, 0))]
    one = sample_from_open_edges(3, [eid])
    assert cluster_radius(one, (0, 0)) == 1
    assert cluster_radius(one, (1, 0)) == 1
    assert cluster_radius(one, (2, 2)) == 0
    for L in (2, 3):
        full = sample_from_open_edges(L, range(_box_lattice(L).m))
        assert cluster_radius(full, (0, 0)) == 2 * L


def test_radius_matches_bfs_oracle():
    rng = np.random.default_rng(4)
    for _ in range(100):
        L = int(rng.integers(2, 7))
        s = sample_union_percolation(L, 0.12, "independent", rng)
        lat = s.lattice
        y = (int(rng.integers(-L, L + 1)), int(rng.integers(-L, L + 1)))
        yi = lat.v_index[y]
        comp = bfs_component(lat, s.open_edges, yi)
        want = max(abs(lat.coords[v][0] - y[0]) + abs(lat.coords[v][1] - y[1]) for v in comp)
        assert cluster_radius(s, y) == want
        members = s.component_members()
        if yi in members:
            assert set(int(v) for v in members[yi]) == comp
        else:
            assert comp == {yi}


def test_radius_monotone_in_open_set():
    rng = np.random.default_rng(5)
    lat = _box_lattice(4)
    base = sample_union_percolation(4, 0.15, "independent", rng)
    extra = np.union1d(base.open_edges,
                       rng.choice(lat.m, size=10, replace=False))
    bigger = sample_from_open_edges(4, extra)
    for v in lat.vertices[::7]:
        assert cluster_radius(bigger, v) >= cluster_radius(base, v)


def test_tail_experiment_bounds_and_zero_eps():
    rng = np.random.default_rng(6)
    table = radius_tail_experiment(8, 0.0, 200, 3, rng)
    assert all(r.p_empirical == 0.0 for r in table.rows)
    table = radius_tail_experiment(10, 1e-3, 2000, 4, rng)
    # path-count bound at k=2 with eps = 1e-3: 2 * 8^2 * eps = 0.128
    assert table.rows[1].bound_path == pytest.approx(0.128)
    assert table.rows[0].bound_exp == pytest.approx(math.exp(-1))
    assert not table.any_violation


def test_tail_csv(tmp_path):
    rng = np.random.default_rng(7)
    table = radius_tail_experiment(6, 1e-3, 300, 3, rng, seed_note="7")
    path = tmp_path / "tail.csv"
    table.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "L,eps,mode,n_samples,seed"
    assert lines[1].split(",") == ["6", "0.001", "independent", "300", "7"]
    assert len(lines) == 3 + 3


def test_radius_sum_zero_eps_and_validation():
    rng = np.random.default_rng(8)
    rep = radius_sum_experiment(3, 0.0, 50, rng)
    assert rep.p_exceed == 0.0 and rep.mean_s == 0.0
    with pytest.raises(ValueError):
        radius_sum_experiment(1, 0.01, 10, rng)


def test_radius_sum_mean_linear_in_eps():
    # first-order inclusion: the mean of S grows linearly in eps
    rng = np.random.default_rng(9)
    eps_grid = [0.002, 0.004, 0.006, 0.008, 0.010]
    means = [radius_sum_experiment(4, e, 1200, rng).mean_s for e in eps_grid]
    x = np.asarray(eps_grid)
    y = np.asarray(means)
    slope = np.polyfit(x, y, 1)[0]
    fit = np.polyval(np.polyfit(x, y, 1), x)
    r2 = 1 - np.sum((y - fit) ** 2) / np.sum((y - y.mean()) ** 2)
    assert slope > 0
    assert r2 > 0.9


def test_radius_sum_exceedance_rare():
    rng = np.random.default_rng(10)
    rep = radius_sum_experiment(8, 1e-3, 2000, rng)
    assert rep.p_exceed == 0.0
