"""Single-state, single-step environment used to sanity-check policy learning."""

import numpy as np


class Bandit:
    def __init__(self, rewards, noise_std=0.0):
        self.rewards = np.asarray(rewards, dtype=np.float64)
        self.noise_std = float(noise_std)
        self._phi = np.ones(1)

    @property
    def n_actions(self):
        return self.rewards.shape[0]

    n_features = 1
    max_steps = 1

    def reset(self, rng=None):
        return 0

    def step(self, state, action, rng):
        r = self.rewards[int(action)]
        if self.noise_std > 0.0:
            r += self.noise_std * rng.standard_normal()
        return 0, float(r), True

    def features(self, state):
        return self._phi
