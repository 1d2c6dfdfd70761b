"""Three-timescale step sizes: critic fastest, representation intermediate, policy slowest."""

from dataclasses import dataclass

import numpy as np

RATE_NAMES = ("critic", "representation", "actor")


@dataclass(frozen=True)
class PowerRate:
    """alpha(t) = base / (t + offset) ** exponent; exponent 0 is a constant rate."""

    base: float
    exponent: float = 0.0
    offset: float = 1.0

    def __post_init__(self):
        if self.base < 0:
            raise ValueError("learning-rate base must be >= 0")
        if not 0.0 <= self.exponent <= 1.0:
            raise ValueError(f"exponent must lie in [0, 1], got {self.exponent}")
        if self.offset <= 0:
            raise ValueError("offset must be > 0")

    @classmethod
    def starting_at(cls, initial, exponent, offset):
        """Rate whose value at t=0 equals ``initial``."""
        return cls(initial * offset ** exponent, exponent, offset)

    def __call__(self, t):
        return self.base / (t + self.offset) ** self.exponent


@dataclass(frozen=True)
class LearningRateSchedule:
    critic: PowerRate
    representation: PowerRate
    actor: PowerRate

    def rates(self, t):
        return self.critic(t), self.representation(t), self.actor(t)

    def scaled(self, factor):
        """Same exponents and offsets with every base multiplied (0 freezes learning)."""
        return LearningRateSchedule(*(PowerRate(r.base * factor, r.exponent, r.offset)
                                      for r in (self.critic, self.representation, self.actor)))


def validate_schedule(schedule):
    """Return the list of violated step-size conditions (empty when valid).

    Each violation names its clause: ``sum_diverges[<rate>]`` (sum of alpha must
    be infinite), ``sum_squares_finite[<rate>]`` (sum of alpha**2 must be finite),
    ``ratio_vanishes[actor/representation]`` and
    ``ratio_vanishes[representation/critic]`` (the slower rate must become
    negligible relative to the faster one).
    """
    violations = []
    rates = dict(zip(RATE_NAMES, (schedule.critic, schedule.representation, schedule.actor)))
    for name, r in rates.items():
        # sum diverges iff exponent <= 1; sum of squares converges iff exponent > 1/2
        if r.base == 0.0 or r.exponent > 1.0:
            violations.append(f"sum_diverges[{name}]")
        if r.base > 0.0 and r.exponent <= 0.5:
            violations.append(f"sum_squares_finite[{name}]")
    if not rates["actor"].exponent > rates["representation"].exponent:
        violations.append("ratio_vanishes[actor/representation]")
    if not rates["representation"].exponent > rates["critic"].exponent:
        violations.append("ratio_vanishes[representation/critic]")
    return violations


def ordering_burn_in(schedule, horizon=10**12):
    """Smallest t after which actor <= representation <= critic holds for good.

    The log-ratio of two power rates has at most one turning point, so the
    set where the ordering fails is an interval; it is located on a geometric
    grid and its right end refined by bisection. Returns None when the
    ordering still fails at ``horizon``.
    """
    burn = 0
    for slow, fast in ((schedule.actor, schedule.representation),
                       (schedule.representation, schedule.critic)):
        t = _ratio_settles(slow, fast, horizon)
        if t is None:
            return None
        burn = max(burn, t)
    return burn


def _ratio_settles(slow, fast, horizon):
    if slow.base == 0.0:
        return 0
    if fast.base == 0.0:
        return None

    def bad(t):
        return slow(t) > fast(t)

    if bad(horizon):
        return None
    grid = np.unique(np.concatenate([[0], np.geomspace(1, horizon, 2048).astype(np.int64)]))
    failing = [t for t in grid if bad(int(t))]
    if not failing:
        return 0
    lo = int(failing[-1])
    hi = int(grid[np.searchsorted(grid, lo, side="right")])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bad(mid):
            lo = mid
        else:
            hi = mid
    return hi
