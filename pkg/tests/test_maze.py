import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgra.envs.maze import Maze, MazeConfig, MazeState, action_displacement, reset, step

OPEN = dict(walls=(), noise_prob=0.0)


def test_action_zero_is_still():
    assert action_displacement(0, MazeConfig()) == (0.0, 0.0)


def test_single_actuator():
    assert action_displacement(1, MazeConfig(n_actuators=4, actuator_magnitude=0.05)) == (0.05, 0.0)


def test_opposite_actuators_cancel_exactly():
    assert action_displacement(0b101, MazeConfig(n_actuators=4)) == (0.0, 0.0)


@pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
def test_fully_paired_actions_cancel(n):
    cfg = MazeConfig(n_actuators=n)
    half = n // 2
    for pairs in itertools.product((0, 1), repeat=half):
        a = 0
        for k, on in enumerate(pairs):
            if on:
                a |= (1 << k) | (1 << (k + half))
        assert action_displacement(a, cfg) == (0.0, 0.0)


@pytest.mark.parametrize("n", [4, 6, 8, 10, 12])
def test_contiguous_half_is_longest_for_its_popcount(n):
    cfg = MazeConfig(n_actuators=n)
    norms = np.hypot(*cfg.displacements.T)
    pop = np.array([bin(a).count("1") for a in range(cfg.n_actions)])
    k = n // 2
    contiguous = (1 << k) - 1
    others = norms[(pop == k) & (np.arange(cfg.n_actions) != contiguous)]
    # rotations of the contiguous block tie with it; everything else is strictly shorter
    rotations = {((contiguous << r) | (contiguous >> (n - r))) & ((1 << n) - 1) for r in range(n)}
    strict = [norms[a] for a in range(cfg.n_actions) if pop[a] == k and a not in rotations]
    assert max(strict) < norms[contiguous] - 1e-12
    assert np.max(others) <= norms[contiguous] + 1e-12


def test_invalid_action():
    with pytest.raises(ValueError, match="outside"):
        action_displacement(16, MazeConfig(n_actuators=4))
    with pytest.raises(ValueError):
        action_displacement(1.5, MazeConfig(n_actuators=4))


def test_reset():
    cfg = MazeConfig()
    assert reset(cfg) == MazeState(0.1, 0.1, 0) == reset(cfg)


def test_noop_step():
    cfg = MazeConfig(**OPEN)
    s, r, term = step(reset(cfg), 0, cfg, np.random.default_rng(0))
    assert (s.x, s.y) == (0.1, 0.1) and r == cfg.step_penalty and not term


def test_reaching_goal():
    cfg = MazeConfig(n_actuators=4, **OPEN)
    near = MazeState(0.1, 0.9 - 0.09, 3)
    s, r, term = step(near, 0b10, cfg, np.random.default_rng(0))    # +y by 0.05
    assert r == 100.0 and term and s.steps_elapsed == 4


def test_step_cap():
    cfg = MazeConfig(**OPEN)
    s, r, term = step(MazeState(0.5, 0.5, cfg.max_steps - 1), 1, cfg, np.random.default_rng(0))
    assert term and r == cfg.step_penalty


def test_wall_blocks_and_border_blocks():
    cfg = MazeConfig(n_actuators=4, noise_prob=0.0)
    below = MazeState(0.3, 0.49, 0)
    s, _, _ = step(below, 0b10, cfg, np.random.default_rng(0))       # would cross y = 0.5
    assert (s.x, s.y) == (0.3, 0.49)
    edge = MazeState(0.98, 0.2, 0)
    s, _, _ = step(edge, 0b1, cfg, np.random.default_rng(0))
    assert (s.x, s.y) == (0.98, 0.2)
    right = MazeState(0.8, 0.49, 0)                                 # past the wall's end
    s, _, _ = step(right, 0b10, cfg, np.random.default_rng(0))
    assert s.y == pytest.approx(0.54)


def test_noise_replaces_action():
    cfg = MazeConfig(n_actuators=4, noise_prob=1.0, walls=())
    rng = np.random.default_rng(5)
    moves = {step(MazeState(0.5, 0.2, 0), 0, cfg, rng)[0][:2] for _ in range(200)}
    assert len(moves) > 3


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 255))
def test_noise_free_step_is_deterministic(x, y, a):
    cfg = MazeConfig(noise_prob=0.0)
    s = MazeState(x, y, 0)
    assert step(s, a, cfg, np.random.default_rng(1)) == step(s, a, cfg, np.random.default_rng(2))


def test_return_bounds():
    cfg = MazeConfig(n_actuators=4)
    env = Maze(cfg)
    rng = np.random.default_rng(0)
    for _ in range(30):
        s = env.reset(rng)
        G = 0.0
        while True:
            s, r, term = env.step(s, int(rng.integers(env.n_actions)), rng)
            G += r
            if term:
                break
        assert cfg.max_steps * cfg.step_penalty <= G <= cfg.goal_reward


def test_config_validation():
    with pytest.raises(ValueError, match="n_actuators"):
        MazeConfig(n_actuators=0)
    with pytest.raises(ValueError, match="on a wall"):
        MazeConfig(start=(0.3, 0.5))
    with pytest.raises(ValueError, match="unit square"):
        MazeConfig(walls=((0.0, 0.5, 1.5, 0.5),))
    with pytest.raises(ValueError):
        MazeConfig(noise_prob=1.5)


def test_env_wrapper_features():
    env = Maze(MazeConfig(n_actuators=3))
    assert env.n_actions == 8 and env.n_features == 16
    s = env.reset()
    np.testing.assert_allclose(env.features(s), env.features_batch([s])[0], atol=1e-15)
    assert env.displacement(1) == (0.05, 0.0)
    assert math.isclose(np.hypot(*env.displacement(2)), 0.05)
