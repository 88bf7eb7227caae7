"""Reinforced-walk simulation: holding laws, local times, time change, occupation statistics."""

import numpy as np
import pytest
from scipy import stats

from vrjplab.graphs import build_box_2d, path_graph, star_graph
from vrjplab.vrjp import (LocalTimeVector, q_statistics, simulate_vrjp, time_change,
                          write_trajectory_csv)


def test_rejects_bad_horizon():
    g = path_graph(2)
    with pytest.raises(ValueError):
        simulate_vrjp(g, 0.0, np.random.default_rng(0))


def test_first_holding_time_is_unit_exponential():
    # single edge, weight 1: the initial rate is W * L_y(0) = 1
    g = path_graph(2, 1.0)
    rng = np.random.default_rng(1)
    holds = np.array([simulate_vrjp(g, np.inf, rng, max_jumps=1).times[0] for _ in range(2000)])
    assert stats.kstest(holds, "expon").pvalue > 0.01


def test_star_first_jump_uniform():
    g = star_graph(5, 0.7)
    rng = np.random.default_rng(2)
    targets = [simulate_vrjp(g, np.inf, rng, max_jumps=1).jump_chain()[1] for _ in range(5000)]
    counts = [targets.count(leaf) for leaf in range(1, 6)]
    assert stats.chisquare(counts).pvalue > 0.01


def test_two_path_second_jump_probability():
    # after a first sojourn of length t, the return rate to the origin is
    # W * L_o = 1 + t against W * L_y = 1, so P(return) = (1+t)/(2+t);
    # Monte Carlo oracle: the mean of (indicator - conditional probability)
    # vanishes within sampling error
    g = path_graph(3, 1.0)
    rng = np.random.default_rng(3)
    diffs = []
    for _ in range(4000):
        traj = simulate_vrjp(g, np.inf, rng, max_jumps=2)
        t1 = float(traj.times[0])
        back = traj.jump_chain()[2] == 0
        diffs.append(float(back) - (1.0 + t1) / (2.0 + t1))
    diffs = np.asarray(diffs)
    z = abs(diffs.mean()) / (diffs.std(ddof=1) / np.sqrt(len(diffs)))
    assert z < 4.0


def test_local_time_conservation_and_shape():
    g = build_box_2d(2, 1.0)
    traj = simulate_vrjp(g, 8.0, np.random.default_rng(4))
    lt = LocalTimeVector(traj)
    assert np.all(lt.vector_at(0.0) == 1.0)
    for t in np.linspace(0.3, 8.0, 9):
        vec = lt.vector_at(t)
        assert abs((vec - 1.0).sum() - t) <= 1e-10 * max(1.0, t)
        assert np.all(vec >= 1.0)
    # slope 1 exactly while occupied: before the first jump the origin grows
    t0 = float(traj.times[0])
    assert lt.value((0, 0), 0.5 * t0) == pytest.approx(1.0 + 0.5 * t0, abs=1e-12)


def test_time_change_quadratic_and_inverse():
    g = build_box_2d(1, 1.0)
    traj = simulate_vrjp(g, 6.0, np.random.default_rng(5))
    tc = time_change(traj)
    assert tc.d(0.0) == 0.0
    t0 = float(traj.times[0])
    for t in (0.25 * t0, 0.9 * t0):
        assert tc.d(t) == pytest.approx(t * t + 2.0 * t, rel=1e-12)
    # D(t) >= t with equality only at 0, and D is strictly increasing
    grid = np.linspace(0.01, 6.0, 60)
    vals = np.array([tc.d(t) for t in grid])
    assert np.all(vals > grid)
    assert np.all(np.diff(vals) > 0)
    for s in np.linspace(0.0, tc.d_horizon, 25):
        assert tc.d(tc.inverse(s)) == pytest.approx(s, abs=1e-9 * (1 + s))


def test_time_change_matches_local_time_recomputation():
    g = build_box_2d(1, 1.3)
    traj = simulate_vrjp(g, 5.0, np.random.default_rng(6))
    lt = LocalTimeVector(traj)
    tc = time_change(traj)
    for t in list(traj.times[:10]) + [traj.horizon]:
        direct = float(((lt.vector_at(t)) ** 2 - 1.0).sum())
        assert tc.d(t) == pytest.approx(direct, rel=1e-10)


def test_jump_chain_preserved_by_time_change():
    # the time change is a strictly increasing bijection, so the visited
    # sequence of the time-changed process equals that of the original walk
    g = build_box_2d(1, 1.0)
    traj = simulate_vrjp(g, 5.0, np.random.default_rng(7))
    tc = time_change(traj)
    zs = np.array([tc.d(t) for t in traj.times])
    assert np.all(np.diff(zs) > 0)
    back = [tc.inverse(s) for s in zs]
    assert np.allclose(back, traj.times, atol=1e-9)


def test_determinism():
    g = build_box_2d(2, 1.0)
    a = simulate_vrjp(g, 4.0, np.random.default_rng(8))
    b = simulate_vrjp(g, 4.0, np.random.default_rng(8))
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.src, b.src)
    assert np.array_equal(a.dst, b.dst)


def test_q_statistics_first_jump():
    g = path_graph(2, 1.0)
    traj = simulate_vrjp(g, np.inf, np.random.default_rng(9), max_jumps=1)
    st = q_statistics(traj, 0, 1)
    assert st.q == pytest.approx(float(traj.times[0]), abs=1e-15)
    assert st.Q == pytest.approx(st.q ** 2 + 2 * st.q, rel=1e-12)


def test_q_identity_everywhere():
    g = build_box_2d(2, 1.0)
    checked = 0
    for k in range(60):
        traj = simulate_vrjp(g, 5.0, np.random.default_rng(100 + k))
        seen = set()
        for i in range(traj.n_jumps):
            pair = (int(traj.src[i]), int(traj.dst[i]))
            if pair in seen:
                continue
            seen.add(pair)
            st = q_statistics(traj, g.labels[pair[0]], g.labels[pair[1]])
            assert abs(st.Q - (st.q ** 2 + 2 * st.q)) <= 1e-12 * (1 + st.Q)
            checked += 1
    assert checked > 500


def test_q_absent_pair_returns_none():
    g = path_graph(3, 1.0)
    traj = simulate_vrjp(g, np.inf, np.random.default_rng(10), max_jumps=1)
    assert q_statistics(traj, 1, 2) is None


def test_q_exponential_tail_bound():
    # the jump rate toward a fixed neighbour is always at least a, so the
    # plain occupation time before that jump is dominated by Exp(a)
    a = 1.3
    g = star_graph(4, a)
    rng = np.random.default_rng(11)
    qs = []
    for _ in range(1000):
        # reinforcement can starve an unvisited leaf for a long while, so the
        # jump cap must be generous for the first jump to 1 to appear
        traj = simulate_vrjp(g, np.inf, rng, max_jumps=800)
        st = q_statistics(traj, 0, 1)
        assert st is not None
        qs.append(st.q)
    qs = np.asarray(qs)
    for t in (1.0, 2.0, 3.0):
        p = float(np.mean(qs > t / a))
        bound = np.exp(-t)
        se = np.sqrt(bound * (1 - bound) / len(qs))
        assert p <= bound + 3 * se


def test_csv_export(tmp_path):
    g = star_graph(3, 1.0)
    traj = simulate_vrjp(g, 3.0, np.random.default_rng(12))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path, local_times_at_horizon=True, metadata={"seed": 12})
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=12"
    assert lines[1].split(",") == ["jump_index", "time", "from", "to"]
    assert len([l for l in lines if l and not l.startswith("#")]) >= traj.n_jumps + 2
    assert any(l.startswith("vertex,") for l in lines)
