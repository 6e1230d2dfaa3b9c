import csv
import math

import numpy as np
import pytest

from swarmguide import tasks
from swarmguide.tasks import GlobalState, TaskSpec
from swarmguide.torus import WorldExtent

GRAPH2 = TaskSpec("graph", 2)
LOC3 = TaskSpec("localization", 3)


def graph_state(xy, hw=10.0):
    xy = np.asarray(xy, dtype=np.float64)
    poses = np.c_[xy, np.zeros(len(xy))]
    return GlobalState(poses, WorldExtent(hw))


def loc_state(xy, found, target, hw=15.0):
    s = graph_state(xy, hw)
    s.found = np.asarray(found, dtype=bool)
    s.target = np.asarray(target, dtype=np.float64)
    return s


def brute_edges(xy, hw, lo=1.5, hi=3.0):
    n, count = len(xy), 0
    for i in range(n):
        for m in range(i + 1, n):
            best = math.inf
            for kx in (-1, 0, 1):
                for ky in (-1, 0, 1):
                    best = min(best, math.hypot(xy[m][0] + 2 * hw * kx - xy[i][0],
                                                xy[m][1] + 2 * hw * ky - xy[i][1]))
            count += lo <= best <= hi
    return count


def test_spec_defaults_and_dims():
    assert GRAPH2.half_width == 10 and LOC3.half_width == 15
    assert GRAPH2.obs_dim == 21 and LOC3.obs_dim == 24
    assert TaskSpec("graph", 4).state_dim == 12
    assert TaskSpec("localization", 1, reduced_obs=True).obs_dim == 2
    with pytest.raises(ValueError):
        TaskSpec("maze", 2)
    with pytest.raises(ValueError):
        TaskSpec("graph", 2, radius=12.0)
    with pytest.raises(ValueError):
        TaskSpec("graph", 2, reduced_obs=True)


def test_reset_is_seeded_and_valid():
    a, b = tasks.reset(TaskSpec("graph", 3), 42), tasks.reset(TaskSpec("graph", 3), 42)
    np.testing.assert_array_equal(a.poses, b.poses)
    assert a.found is None and a.target is None
    s = tasks.reset(TaskSpec("localization", 2), 7)
    assert s.found.tolist() == [False, False]
    assert np.all(np.abs(s.target) <= 15)
    assert np.all((s.poses[:, 2] > -math.pi) & (s.poses[:, 2] <= math.pi))


def test_reset_positions_are_centered():
    xs = np.concatenate([tasks.reset(GRAPH2, s).poses[:, :2] for s in range(5000)])
    sigma = 20 / math.sqrt(12) / math.sqrt(len(xs))
    assert np.all(np.abs(xs.mean(axis=0)) < 3 * sigma)


def test_graph_step_rewards():
    s = graph_state([[0, 0], [2, 0]])
    _, r = tasks.step(s, np.zeros((2, 2)), GRAPH2)
    assert r == 1.0
    # both move +x by one: distance unchanged
    _, r = tasks.step(s, [[1, 0], [1, 0]], GRAPH2)
    assert r == pytest.approx(1 - 0.05 * 2)


def test_step_requires_one_action_per_agent():
    with pytest.raises(ValueError):
        tasks.step(graph_state([[0, 0], [2, 0]]), np.zeros((3, 2)), GRAPH2)


def test_step_is_synchronous_and_pure():
    s = graph_state([[0, 0], [2, 0]])
    before = s.poses.copy()
    nxt, _ = tasks.step(s, [[1, 0], [1, math.pi]], GRAPH2)
    np.testing.assert_array_equal(s.poses, before)
    np.testing.assert_allclose(nxt.poses[:, :2], [[1, 0], [1, 0]], atol=1e-12)
    assert nxt.t == 1


def test_reward_graph_examples():
    tri = graph_state([[0, 0], [2, 0], [1, math.sqrt(3)]])
    spec3 = TaskSpec("graph", 3)
    assert tasks.reward_graph(tri, np.zeros((3, 2)), spec3) == 3
    far = graph_state([[-8, -8], [-8, 2], [2, -8], [2, 2]])
    a = np.array([[1, 0], [0.5, 1], [0, 0], [1, -2]])
    expected = -0.05 * (1 + math.hypot(0.5, 1) + 0 + math.hypot(1, 2))
    assert tasks.reward_graph(far, a, TaskSpec("graph", 4)) == pytest.approx(expected, abs=1e-15)


def test_reward_graph_matches_brute_force():
    rng = np.random.default_rng(0)
    spec = TaskSpec("graph", 5)
    for k in range(1000):
        if k % 2:
            xy = rng.uniform(-10, 10, size=(5, 2))
        else:
            # cluster near the corner so many edges cross the wrap
            xy = np.mod(rng.uniform(-2, 2, size=(5, 2)) + 20, 20) - 10
        s = graph_state(xy)
        assert tasks.reward_graph(s, np.zeros((5, 2)), spec) == brute_edges(xy, 10.0)


def test_reward_graph_bound():
    rng = np.random.default_rng(1)
    spec = TaskSpec("graph", 6)
    for _ in range(200):
        s = graph_state(rng.uniform(-2, 2, size=(6, 2)))
        assert tasks.reward_graph(s, np.zeros((6, 2)), spec) <= 15


def test_localization_rewards():
    s = loc_state([[0, 0], [5, 5], [-5, -5]], [1, 1, 0], [10, -10])
    _, r = tasks.step(s, np.zeros((3, 2)), LOC3)
    assert r == 2.0
    spec2 = TaskSpec("localization", 2)
    s = loc_state([[0, 0], [5, 5]], [1, 0], [10, -10])
    assert tasks.reward_localization(s, [[1, 0], [0, 0]], spec2) == pytest.approx(1 - 0.05)
    assert tasks.reward_localization(loc_state([[0, 0], [5, 5]], [1, 1], [0, 0]), np.zeros((2, 2)), spec2) == 2
    assert tasks.reward_localization(loc_state([[0, 0], [5, 5]], [0, 0], [0, 0]), np.zeros((2, 2)), spec2) == 0


def test_reward_localization_matches_formula():
    rng = np.random.default_rng(2)
    spec = TaskSpec("localization", 4)
    for _ in range(1000):
        found = rng.integers(0, 2, size=4).astype(bool)
        s = loc_state(rng.uniform(-15, 15, size=(4, 2)), found, rng.uniform(-15, 15, size=2))
        a = np.c_[rng.uniform(0, 1, 4), rng.uniform(-math.pi, math.pi, 4)]
        expected = found.sum() - 0.05 * sum(math.hypot(*ai) for ai in a)
        assert tasks.reward_localization(s, a, spec) == pytest.approx(expected, abs=1e-12)


def test_found_bits_set_on_contact_and_sticky():
    spec = TaskSpec("localization", 1)
    s = loc_state([[0, 0]], [0], [4.5, 0])
    s, _ = tasks.step(s, [[1, 0]], spec)
    assert s.found.tolist() == [True]
    s, r = tasks.step(s, [[1, math.pi]], spec)
    s, r = tasks.step(s, [[1, 0]], spec)
    assert s.found.tolist() == [True]
    # also across the wrap
    s = loc_state([[14.5, 0]], [0], [-12.0, 0])
    s, _ = tasks.step(s, [[0, 0]], spec)
    assert s.found.tolist() == [True]


def test_localization_observation():
    # agent 0 at distance 5 of target, agent 1 at distance 3, agent 2 far away
    s = loc_state([[-5, 0], [-3, 0], [10, 10]], [0, 1, 0], [0, 0])
    obs = tasks.observe_all(s, LOC3)
    assert obs.shape == (3, 24)
    assert obs[0, 1] == -1.0
    assert obs[1, 1] == pytest.approx(3.0)
    assert obs[0].tolist()[:3] == [0.0, -1.0, 1.0]   # neighbour 1 sees the target
    assert obs[1].tolist()[:3] == [1.0, 3.0, 0.0]   # b excludes the agent itself
    assert obs[2].tolist()[:3] == [0.0, -1.0, 0.0]
    np.testing.assert_array_equal(tasks.observe(s, 1, LOC3), obs[1])
    with pytest.raises(IndexError):
        tasks.observe(s, 3, LOC3)


def test_isolated_agent_graph_observation_is_zero():
    s = graph_state([[0, 0]])
    np.testing.assert_array_equal(tasks.observe(s, 0, TaskSpec("graph", 1)), np.zeros(21))


def test_reduced_observation():
    spec = TaskSpec("localization", 1, reduced_obs=True)
    s = loc_state([[0, 0]], [1], [3, 0])
    np.testing.assert_allclose(tasks.observe(s, 0, spec), [1.0, 3.0])


def test_permutation_equivariance():
    rng = np.random.default_rng(4)
    spec = TaskSpec("localization", 6)
    for _ in range(50):
        s = loc_state(rng.uniform(-5, 5, size=(6, 2)), rng.integers(0, 2, 6), rng.uniform(-5, 5, 2))
        s.poses[:, 2] = rng.uniform(-math.pi, math.pi, 6)
        a = np.c_[rng.uniform(0, 1, 6), rng.uniform(-1, 1, 6)]
        perm = rng.permutation(6)
        sp = loc_state(s.poses[perm, :2], s.found[perm], s.target)
        sp.poses[:, 2] = s.poses[perm, 2]
        np.testing.assert_allclose(tasks.observe_all(sp, spec), tasks.observe_all(s, spec)[perm], atol=1e-12)
        n1, r1 = tasks.step(s, a, spec)
        n2, r2 = tasks.step(sp, a[perm], spec)
        assert r1 == pytest.approx(r2, abs=1e-12)
        np.testing.assert_array_equal(n1.found[perm], n2.found)


def test_observation_dims_constant():
    rng = np.random.default_rng(5)
    for m in (1, 2, 5):
        for spec in (TaskSpec("graph", m), TaskSpec("localization", m)):
            s = tasks.reset(spec, int(rng.integers(1000)))
            assert tasks.observe_all(s, spec).shape == (m, spec.obs_dim)


def test_state_vector_layout():
    s = loc_state([[1, 2], [3, 4]], [0, 1], [5, 6])
    np.testing.assert_array_equal(s.vector(), [1, 2, 0, 0, 3, 4, 0, 1, 5, 6])
    assert tasks.reset(TaskSpec("graph", 4), 0).vector().shape == (12,)


def test_trajectory_dump(tmp_path):
    spec = TaskSpec("localization", 2, episode_length=3)
    s = tasks.reset(spec, 0)
    rows = [tasks.trajectory_row(0, s, None)]
    for _ in range(3):
        s, r = tasks.step(s, np.full((2, 2), 0.5), spec)
        rows.append(tasks.trajectory_row(0, s, r))
    path = tmp_path / "traj.csv"
    tasks.write_trajectory(path, spec, rows)
    read = list(csv.reader(open(path)))
    assert read[0] == ["episode", "t", "x0", "y0", "phi0", "l0", "x1", "y1", "phi1", "l1",
                       "target_x", "target_y", "reward"]
    assert [r[1] for r in read[1:]] == ["0", "1", "2", "3"]
    assert read[1][-1] == ""
    assert float(read[-1][2]) == s.poses[0, 0]
