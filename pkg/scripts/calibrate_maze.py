"""Find the wall count giving ~50% corner connectivity for each maze size.

Usage: python scripts/calibrate_maze.py 8 9 13 20
"""
import argparse

import numpy as np

from predictron.envs.maze import corners_connected, gen_maze_task2


def connectivity(size: int, n_walls: int, n_mazes: int, seed: int) -> float:
    rng = np.random.default_rng([seed, size, n_walls])
    hits = sum(corners_connected(gen_maze_task2(rng, size, n_walls)) for _ in range(n_mazes))
    return hits / n_mazes


def calibrate(size: int, n_mazes: int = 10000, seed: int = 0, target: float = 0.5) -> tuple[int, float]:
    lo, hi = 0, size * size - 2  # connectivity(lo) = 1 >= target > connectivity(hi) = 0
    cache = {}

    def frac(w):
        if w not in cache:
            cache[w] = connectivity(size, w, n_mazes, seed)
        return cache[w]

    while hi - lo > 1:
        mid = (lo + hi) // 2
        if frac(mid) >= target:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda w: abs(frac(w) - target))
    return best, frac(best)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("sizes", nargs="+", type=int)
    ap.add_argument("--mazes", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for size in args.sizes:
        walls, frac = calibrate(size, args.mazes, args.seed)
        print(f"{size}: {walls},  # wall fraction {walls / size**2:.3f}, connectivity {frac:.3f}")


if __name__ == "__main__":
    main()
