"""Time the numba kernels against their numpy twins on maze-sized inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is called once to trigger compilation before timing.
"""

import argparse
import time

import numpy as np

from pgra.envs.maze import Maze, MazeConfig
from pgra.kernels import _numpy as numpy_impl

try:
    from pgra.kernels import _numba as numba_impl
except ImportError:  # numba missing
    numba_impl = None


def _cases(rng):
    maze = Maze(MazeConfig(n_actuators=8, actuator_magnitude=0.1))
    A, F, d = maze.n_actions, maze.n_features, 2
    W = rng.uniform(-1, 1, (d, A))
    tW = np.tanh(W)
    U = rng.uniform(-0.1, 0.1, (d, 2 * F))
    X = rng.uniform(-1, 1, (4096, 2 * F))
    acts = rng.integers(0, A, 4096)
    order = rng.permutation(4096).astype(np.int64)
    E = rng.uniform(-1, 1, (2000, d))
    n = maze.max_steps
    coins, repl, xi = rng.random(n), rng.integers(0, A, n), rng.standard_normal((n, d))
    sched = np.array([[1e-4, 0.6, 1e6], [1e-4, 0.8, 1e6], [1e-4, 1.0, 1e6]])
    hyper = np.array([0.99, 0.9, 1.0, 0.0, 0.0, 0.0])
    M0 = rng.uniform(-0.3, 0.3, (d, F))

    def decode(k):
        for e in E:
            k.nearest_action(tW, e, 0)

    def grad(k):
        k.supervised_grad(W, U, X, acts, 1.0, 0)

    def epoch(k):
        k.sgd_epoch(W.copy(), U.copy(), X, acts, order, 32, 0.1, 1.0, 0)

    def episode(k):
        k.maze_ra_episode(*maze.kernel_args(), tW, U, M0.copy(), np.zeros(d), np.zeros(F),
                          np.zeros(F), hyper, sched, 0, coins, repl, xi, 0, True)

    return {"nearest_action x2000": decode, "supervised_grad 4096x256": grad,
            "sgd_epoch 4096": epoch, "maze_ra_episode (150 steps)": episode}


def _time(fn, impl, repeat):
    fn(impl)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(impl)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<30}{'numpy ms':>12}{'numba ms':>12}{'speed-up':>10}")
    for name, fn in cases.items():
        t_np = _time(fn, numpy_impl, args.repeat)
        if numba_impl is None:
            print(f"{name:<30}{1e3 * t_np:>12.2f}{'n/a':>12}{'':>10}")
            continue
        t_nb = _time(fn, numba_impl, args.repeat)
        print(f"{name:<30}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
