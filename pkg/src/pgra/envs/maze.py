"""Continuous-state maze with n actuators and 2**n combinatorial actions."""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .. import kernels
from ..features import FourierBasisConfig, fourier_features

MAX_ACTUATORS = 24

# Default layout: a single interior wall forces a detour around its right end.
DEFAULT_WALLS = ((0.0, 0.5, 0.7, 0.5),)


@dataclass(frozen=True)
class MazeConfig:
    n_actuators: int = 8
    actuator_magnitude: float = 0.05
    step_penalty: float = -0.05
    goal_reward: float = 100.0
    noise_prob: float = 0.1
    max_steps: int = 150
    start: tuple = (0.1, 0.1)
    goal: tuple = (0.1, 0.9)
    goal_radius: float = 0.05
    walls: tuple = DEFAULT_WALLS
    fourier_order: int = 3
    wall_array: np.ndarray = field(init=False, repr=False, compare=False)
    displacements: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.n_actuators <= MAX_ACTUATORS:
            raise ValueError(f"n_actuators must be in [1, {MAX_ACTUATORS}], got {self.n_actuators}")
        if self.actuator_magnitude <= 0:
            raise ValueError("actuator_magnitude must be > 0")
        if self.step_penalty > 0:
            raise ValueError("step_penalty must be <= 0")
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ValueError("noise_prob must lie in [0, 1]")
        if self.goal_radius <= 0:
            raise ValueError("goal_radius must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        walls = tuple(tuple(float(v) for v in w) for w in self.walls)
        object.__setattr__(self, "walls", walls)
        arr = np.array(walls, dtype=np.float64).reshape(-1, 4)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("walls must lie inside the unit square")
        object.__setattr__(self, "wall_array", arr)
        for name, p in (("start", self.start), ("goal", self.goal)):
            if len(p) != 2 or not all(0.0 <= v <= 1.0 for v in p):
                raise ValueError(f"{name} {p} must be a point in [0, 1]^2")
            if _on_wall(p, arr):
                raise ValueError(f"{name} {p} lies on a wall")
        object.__setattr__(self, "displacements", _displacement_table(self.n_actuators,
                                                                      self.actuator_magnitude))

    @property
    def n_actions(self):
        return 1 << self.n_actuators


def _on_wall(p, walls):
    x, y = p
    for ax, ay, bx, by in walls:
        cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        if abs(cross) < 1e-12 and min(ax, bx) <= x <= max(ax, bx) and min(ay, by) <= y <= max(ay, by):
            return True
    return False


def _actuator_units(n, magnitude):
    # Opposite actuators are exact negatives and axis-aligned ones have exact zeros,
    # so paired actuators cancel without rounding residue.
    units = []
    for k in range(n):
        if n % 2 == 0 and k >= n // 2:
            ux, uy = units[k - n // 2]
            units.append((-ux, -uy))
            continue
        th = 2.0 * math.pi * k / n
        c, s = math.cos(th), math.sin(th)
        units.append((magnitude * (0.0 if abs(c) < 1e-15 else c),
                      magnitude * (0.0 if abs(s) < 1e-15 else s)))
    return units


def _displacement_table(n, magnitude):
    # Summed in ascending actuator order so every entry is reproducible bit-for-bit;
    # opposite pairs are dropped first so they cancel exactly.
    units = _actuator_units(n, magnitude)
    table = np.zeros((1 << n, 2))
    half = n // 2 if n % 2 == 0 else 0
    low = (1 << half) - 1
    for a in range(1, 1 << n):
        if half:
            pairs = a & (a >> half) & low
            if pairs:
                table[a] = table[a & ~(pairs | (pairs << half))]
                continue
        h = a.bit_length() - 1
        rest = a & ~(1 << h)
        table[a, 0] = table[rest, 0] + units[h][0]
        table[a, 1] = table[rest, 1] + units[h][1]
    return table


class MazeState(NamedTuple):
    x: float
    y: float
    steps_elapsed: int = 0


def check_action(action, config):
    a = int(action)
    if a != action or not 0 <= a < config.n_actions:
        raise ValueError(f"action {action} outside [0, {config.n_actions})")
    return a


def action_displacement(action, config):
    """Vector sum of magnitude*(cos 2*pi*k/n, sin 2*pi*k/n) over the set bits k."""
    a = check_action(action, config)
    dx, dy = config.displacements[a]
    return float(dx), float(dy)


def reset(config):
    return MazeState(config.start[0], config.start[1], 0)


def step(state, action, config, rng):
    """Advance one step; returns ``(next_state, reward, terminal)``.

    With probability ``noise_prob`` the action is replaced by a uniformly random
    one. A move that would leave the unit square or cross a wall is blocked.
    """
    a = check_action(action, config)
    if config.noise_prob > 0.0 and rng.random() < config.noise_prob:
        a = int(rng.integers(config.n_actions))
    dx, dy = config.displacements[a]
    x0, y0 = state.x, state.y
    x1, y1 = x0 + dx, y0 + dy
    if (x1 < 0.0 or x1 > 1.0 or y1 < 0.0 or y1 > 1.0
            or kernels.segments_cross(x0, y0, x1, y1, config.wall_array)):
        x1, y1 = x0, y0
    steps = state.steps_elapsed + 1
    gx, gy = config.goal
    if (x1 - gx) ** 2 + (y1 - gy) ** 2 <= config.goal_radius ** 2:
        return MazeState(x1, y1, steps), config.goal_reward, True
    return MazeState(x1, y1, steps), config.step_penalty, steps >= config.max_steps


class Maze:
    """Environment wrapper exposing the protocol used by the training loop."""

    def __init__(self, config=None):
        self.config = config or MazeConfig()
        self.basis = FourierBasisConfig(order=self.config.fourier_order, input_dim=2)

    @property
    def n_actions(self):
        return self.config.n_actions

    @property
    def n_features(self):
        return self.basis.n_features

    @property
    def max_steps(self):
        return self.config.max_steps

    def reset(self, rng=None):
        return reset(self.config)

    def step(self, state, action, rng):
        return step(state, action, self.config, rng)

    def features(self, state):
        return fourier_features(np.array((state.x, state.y)), self.basis)

    def displacement(self, action):
        return action_displacement(action, self.config)

    def features_batch(self, states):
        xy = np.array([(st.x, st.y) for st in states], dtype=np.float64).reshape(-1, 2)
        return np.cos(np.pi * (xy @ self.basis.coeffs.T))

    def kernel_args(self):
        """Arrays describing the maze for the fused episode kernels."""
        c = self.config
        geom = np.array([c.max_steps, c.goal_radius ** 2, c.goal_reward, c.step_penalty,
                         c.noise_prob], dtype=np.float64)
        return (np.array(c.start), np.array(c.goal), geom, c.wall_array, c.displacements,
                self.basis.coeffs)
