"""Random mazes for the trajectory task and the diagonal-connectivity task."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

TASK_TRAJECTORY = 1
TASK_CONNECTIVITY = 2

WALL_PROB_TASK1 = 0.15
POLICY_STEPS = 60

# Wall counts giving ~50% top-left/bottom-right connectivity, found by
# scripts/calibrate_maze.py (bisection over 10,000 mazes per count).
CALIBRATED_WALLS = {
    5: 8,
    8: 19,
    9: 24,
    13: 51,
    20: 120,
}

# headings in N, E, S, W order; (drow, dcol)
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass
class Maze:
    walls: np.ndarray  # [n, n] bool, True = wall
    seed: int | None = None
    start: tuple[int, int] | None = None

    @property
    def size(self) -> int:
        return self.walls.shape[0]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_maze_task1(seed, size: int = 13, wall_prob: float = WALL_PROB_TASK1) -> Maze:
    """Independent walls with probability ``wall_prob``; start uniform over empty cells."""
    rng = _rng(seed)
    walls = rng.random((size, size)) < wall_prob
    empty = np.flatnonzero(~walls)
    if empty.size == 0:
        walls[size // 2, size // 2] = False
        empty = np.flatnonzero(~walls)
    idx = int(empty[rng.integers(empty.size)])
    return Maze(walls, seed if isinstance(seed, (int, np.integer)) else None, divmod(idx, size))


def gen_maze_task2(seed, size: int = 20, n_walls: int | None = None) -> Maze:
    """A fixed number of walls shuffled uniformly over all but the two corners."""
    rng = _rng(seed)
    if n_walls is None:
        n_walls = calibrated_walls(size)
    cells = size * size - 2
    if not 0 <= n_walls <= cells:
        raise ValueError(f"cannot place {n_walls} walls in a {size}x{size} maze")
    flat = np.zeros(cells, dtype=bool)
    flat[rng.choice(cells, n_walls, replace=False)] = True
    walls = np.zeros(size * size, dtype=bool)
    walls[1:-1] = flat
    return Maze(walls.reshape(size, size), seed if isinstance(seed, (int, np.integer)) else None)


def calibrated_walls(size: int) -> int:
    try:
        return CALIBRATED_WALLS[size]
    except KeyError:
        raise KeyError(f"no calibrated wall count for size {size}; "
                       f"run scripts/calibrate_maze.py") from None


# trajectory task ----------------------------------------------------------

def _policy_table() -> tuple[int, ...]:
    """Relative-turn lookup indexed by the 4 blocked bits (front, right, back, left).

    Entry is a turn (0 straight, 1 right, 2 back, 3 left) or -1 to stay put.
    Preference: straight, then right, then left, then back.
    """
    table = []
    for cfg in range(16):
        blocked = [(cfg >> b) & 1 for b in range(4)]  # bit0 front, 1 right, 2 back, 3 left
        for turn in (0, 1, 3, 2):
            if not blocked[turn]:
                table.append(turn)
                break
        else:
            table.append(-1)
    return tuple(table)


POLICY_TABLE = _policy_table()


def _blocked(walls: np.ndarray, r: int, c: int, heading: int) -> bool:
    dr, dc = MOVES[heading]
    rr, cc = r + dr, c + dc
    n = walls.shape[0]
    return not (0 <= rr < n and 0 <= cc < n) or bool(walls[rr, cc])


def policy_rollout(maze: Maze, start: tuple[int, int] | None = None,
                   steps: int = POLICY_STEPS, heading: int = 0) -> np.ndarray:
    """Visit indicators (flattened n*n, start included) of the fixed wall-follower."""
    walls = maze.walls
    n = walls.shape[0]
    r, c = start if start is not None else maze.start
    visited = np.zeros((n, n), dtype=np.float32)
    visited[r, c] = 1.0
    for _ in range(steps):
        cfg = 0
        for turn in range(4):
            if _blocked(walls, r, c, (heading + turn) % 4):
                cfg |= 1 << turn
        turn = POLICY_TABLE[cfg]
        if turn < 0:
            continue
        heading = (heading + turn) % 4
        dr, dc = MOVES[heading]
        rr, cc = r + dr, c + dc
        if 0 <= rr < n and 0 <= cc < n and not walls[rr, cc]:
            r, c = rr, cc
        visited[r, c] = 1.0
    return visited.reshape(-1)


# connectivity task --------------------------------------------------------

def flood_fill(walls: np.ndarray, source: tuple[int, int]) -> np.ndarray:
    """Cells 4-connected to ``source`` through empty cells."""
    n, m = walls.shape
    reached = np.zeros_like(walls, dtype=bool)
    if walls[source]:
        return reached
    reached[source] = True
    queue = deque([source])
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES:
            rr, cc = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc < m and not walls[rr, cc] and not reached[rr, cc]:
                reached[rr, cc] = True
                queue.append((rr, cc))
    return reached


def flood_fill_connectivity(maze: Maze) -> np.ndarray:
    """Bit i = 1 iff diagonal cell (i, i) is empty and connected to the bottom-right corner."""
    n = maze.size
    reached = flood_fill(maze.walls, (n - 1, n - 1))
    return reached[np.arange(n), np.arange(n)].astype(np.float32)


def corners_connected(maze: Maze) -> bool:
    return bool(flood_fill_connectivity(maze)[0])


# encoding -----------------------------------------------------------------

def encode_planes(maze: Maze, start: tuple[int, int] | None = None) -> np.ndarray:
    """Channel 0: walls. Channel 1 (trajectory task only): one-hot start."""
    walls = maze.walls.astype(np.float32)
    if start is None:
        return walls[None]
    pos = np.zeros_like(walls)
    pos[start] = 1.0
    return np.stack([walls, pos])


def sample_batch(task: int, rng, n: int, size: int, n_walls: int | None = None):
    """``n`` (planes, target) pairs stacked into arrays."""
    rng = _rng(rng)
    xs, ys = [], []
    for _ in range(n):
        if task == TASK_TRAJECTORY:
            maze = gen_maze_task1(rng, size)
            xs.append(encode_planes(maze, maze.start))
            ys.append(policy_rollout(maze))
        elif task == TASK_CONNECTIVITY:
            maze = gen_maze_task2(rng, size, n_walls)
            xs.append(encode_planes(maze))
            ys.append(flood_fill_connectivity(maze))
        else:
            raise ValueError(f"unknown maze task {task}")
    return np.stack(xs), np.stack(ys)
