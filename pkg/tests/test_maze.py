import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from predictron.envs import maze as mz
from predictron.io import SampleSet, decode_samples, encode_samples


def union_find_bits(walls):
    """Diagonal connectivity to the bottom-right corner via disjoint sets."""
    n = walls.shape[0]
    parent = list(range(n * n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for r in range(n):
        for c in range(n):
            if walls[r, c]:
                continue
            if r + 1 < n and not walls[r + 1, c]:
                parent[find(r * n + c)] = find((r + 1) * n + c)
            if c + 1 < n and not walls[r, c + 1]:
                parent[find(r * n + c)] = find(r * n + c + 1)
    corner = find(n * n - 1)
    return np.array([float(not walls[i, i] and find(i * n + i) == corner) for i in range(n)])


def maze_from(rows):
    return mz.Maze(np.array([[ch == "#" for ch in row] for row in rows]))


# 5x5 corridor: a single snake-shaped path from the top-left to the bottom-right
CORRIDOR = maze_from([
    ".....",
    "####.",
    ".....",
    ".####",
    ".....",
])
# hand simulation of the wall-follower from (0, 0), heading north
CORRIDOR_PATH = [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (1, 4), (2, 4), (2, 3), (2, 2), (2, 1),
                 (2, 0), (3, 0), (4, 0), (4, 1), (4, 2), (4, 3), (4, 4)]


# trajectory task --------------------------------------------------------------

def test_policy_table_prefers_straight_then_right():
    assert mz.POLICY_TABLE[0b0000] == 0
    assert mz.POLICY_TABLE[0b0001] == 1
    assert mz.POLICY_TABLE[0b0011] == 3
    assert mz.POLICY_TABLE[0b1011] == 2
    assert mz.POLICY_TABLE[0b1111] == -1


@pytest.mark.parametrize("steps", range(len(CORRIDOR_PATH)))
def test_corridor_hand_simulation(steps):
    visited = mz.policy_rollout(CORRIDOR, (0, 0), steps=steps).reshape(5, 5)
    expect = np.zeros((5, 5))
    for cell in CORRIDOR_PATH[:steps + 1]:
        expect[cell] = 1
    np.testing.assert_array_equal(visited, expect)


def test_corridor_full_rollout_marks_every_empty_cell():
    visited = mz.policy_rollout(CORRIDOR, (0, 0)).reshape(5, 5)
    np.testing.assert_array_equal(visited, ~CORRIDOR.walls)


def test_walled_in_start_marks_only_start():
    m = maze_from(["###", "#.#", "###"])
    np.testing.assert_array_equal(mz.policy_rollout(m, (1, 1)), np.eye(1, 9, 4)[0])


def test_task1_start_is_empty_and_marked():
    for seed in range(50):
        m = mz.gen_maze_task1(seed, size=9)
        assert not m.walls[m.start]
        assert mz.policy_rollout(m).reshape(9, 9)[m.start] == 1.0


@given(st.integers(0, 2**32 - 1))
def test_task1_deterministic_and_sparse(seed):
    a, b = mz.gen_maze_task1(seed), mz.gen_maze_task1(seed)
    assert a.walls.tobytes() == b.walls.tobytes() and a.start == b.start
    ta, tb = mz.policy_rollout(a), mz.policy_rollout(b)
    assert ta.tobytes() == tb.tobytes()
    assert set(np.unique(ta)) <= {0.0, 1.0}
    assert ta.sum() <= mz.POLICY_STEPS + 1
    assert not ta.reshape(a.walls.shape)[a.walls].any()


def test_task1_wall_fraction():
    rng = np.random.default_rng(0)
    frac = np.mean([mz.gen_maze_task1(rng).walls.mean() for _ in range(2000)])
    assert abs(frac - 0.15) < 0.01


# connectivity task ------------------------------------------------------------

def test_all_empty_maze_all_bits_one():
    assert mz.flood_fill_connectivity(mz.Maze(np.zeros((6, 6), bool))).tolist() == [1.0] * 6


def test_walled_diagonal_cell_bit_zero():
    walls = np.zeros((6, 6), bool)
    walls[2, 2] = True
    bits = mz.flood_fill_connectivity(mz.Maze(walls))
    assert bits[2] == 0.0 and bits.sum() == 5


@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.floats(0.0, 0.7))
def test_flood_fill_matches_union_find(seed, n, density):
    walls = np.random.default_rng(seed).random((n, n)) < density
    np.testing.assert_array_equal(mz.flood_fill_connectivity(mz.Maze(walls)), union_find_bits(walls))


@given(st.integers(0, 2**32 - 1))
def test_task2_corners_empty_and_wall_count_exact(seed):
    m = mz.gen_maze_task2(seed, size=8)
    assert not m.walls[0, 0] and not m.walls[-1, -1]
    assert m.walls.sum() == mz.calibrated_walls(8)
    assert m.walls.tobytes() == mz.gen_maze_task2(seed, size=8).walls.tobytes()


def test_task2_rejects_impossible_wall_count():
    with pytest.raises(ValueError):
        mz.gen_maze_task2(0, size=3, n_walls=8)
    with pytest.raises(KeyError):
        mz.calibrated_walls(7)


@pytest.mark.parametrize("size", [8, 20])
def test_task2_statistics(size):
    rng = np.random.default_rng(size)
    mazes = [mz.gen_maze_task2(rng, size) for _ in range(2000)]
    connected = np.mean([mz.corners_connected(m) for m in mazes])
    assert abs(connected - 0.5) < 0.05
    if size == 20:
        assert abs(np.mean([m.walls.mean() for m in mazes]) - 0.30) < 0.02


def test_task2_label_prior_non_degenerate():
    _, y = mz.sample_batch(mz.TASK_CONNECTIVITY, np.random.default_rng(1), 2000, 8)
    prior = y.mean(axis=0)
    # the bottom-right corner is connected to itself by construction
    assert prior[-1] == 1.0
    assert np.all((prior[:-1] >= 0.2) & (prior[:-1] <= 0.8)), prior


# encoding ---------------------------------------------------------------------

def test_plane_counts_and_values():
    m1 = mz.gen_maze_task1(3, size=9)
    p1 = mz.encode_planes(m1, m1.start)
    p2 = mz.encode_planes(mz.gen_maze_task2(3, size=8))
    assert p1.shape == (2, 9, 9) and p2.shape == (1, 8, 8)
    assert set(np.unique(p1)) <= {0.0, 1.0} and p1[1].sum() == 1.0 and p1[1][m1.start] == 1.0


@pytest.mark.parametrize("task,size", [(mz.TASK_TRAJECTORY, 9), (mz.TASK_CONNECTIVITY, 8)])
def test_batch_round_trips_through_serializer(task, size):
    x, y = mz.sample_batch(task, 5, 7, size)
    back = decode_samples(encode_samples(SampleSet(task, size, x, y)))
    assert back.task == task and back.size == size
    assert back.planes.tobytes() == x.tobytes() and back.targets.tobytes() == y.tobytes()


def test_unknown_task():
    with pytest.raises(ValueError):
        mz.sample_batch(9, 0, 1, 8)
