"""Policy gradients with learned action representations: the full training loop.

Representations are first fitted on transitions from a uniform-random policy,
then every environment step samples an embedding from the internal policy,
decodes it to the nearest action, and updates actor, critic and (unless
frozen) the representation module, all driven by one global step counter.
"""

import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import actrep, kernels
from .actrep import METRICS, Transition, TransitionBatch
from .envs.maze import Maze
from .metrics import MetricsLog
from .policy import (init_critic, init_internal_policy, init_softmax_policy, policy_mean,
                     softmax_probs)
from .schedule import LearningRateSchedule, PowerRate, validate_schedule

ALGORITHMS = ("ac-ra", "reinforce-ra", "ac-flat")


def default_schedule():
    return LearningRateSchedule(
        critic=PowerRate.starting_at(0.01, 0.6, 1e5),
        representation=PowerRate.starting_at(0.01, 0.8, 1e5),
        actor=PowerRate.starting_at(0.01, 1.0, 1e5),
    )


@dataclass
class TrainConfig:
    env: object  # an environment instance following the Maze/Bandit protocol
    algorithm: str = "ac-ra"
    d_e: int = 2
    gamma: float = 0.99
    lam: float = 0.9
    sigma: float = 0.25
    learn_sigma: bool = False
    projection_bound: float | None = None
    schedule: LearningRateSchedule = field(default_factory=default_schedule)
    n_init_trajectories: int = 2000
    init_lr: float = 1.0
    init_batch_size: int = 32
    init_max_epochs: int = 200
    init_window: int = 10
    init_tol: float = 1e-4
    init_scale: float = 0.1
    similarity: str = "sqeuclid"
    tau: float = 1.0
    total_episodes: int = 1000
    seed: int = 0
    representation_frozen: bool = False
    replay_batch: int = 0
    unbiased: bool = False
    baseline_window: int = 100
    allow_invalid_schedule: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.total_episodes <= 0:
            raise ValueError("total_episodes must be > 0")
        if self.d_e < 1:
            raise ValueError("d_e must be >= 1")
        if self.n_init_trajectories < 0:
            raise ValueError("n_init_trajectories must be >= 0")

    @property
    def uses_representations(self):
        return self.algorithm != "ac-flat"


def collect_random_trajectories(env, n, rng):
    """Roll out ``n`` episodes of the uniform-random policy; rewards are kept but unused."""
    out = []
    for _ in range(n):
        s = env.reset(rng)
        while True:
            a = int(rng.integers(env.n_actions))
            s2, r, term = env.step(s, a, rng)
            out.append(Transition(s, a, r, s2, term))
            s = s2
            if term:
                break
    return out


def transition_batch(transitions, env):
    if hasattr(env, "features_batch"):
        X = np.concatenate([env.features_batch([t.s for t in transitions]),
                            env.features_batch([t.s_next for t in transitions])], axis=1)
        return TransitionBatch(X, np.array([t.a for t in transitions], dtype=np.int64))
    return TransitionBatch.from_transitions(transitions, env.features)


def initialize_representations(transitions, params, config, rng, env):
    """Fit ``params`` in place on random-policy transitions; returns the loss history."""
    batch = transition_batch(transitions, env)
    return actrep.train_epochs(batch, params, config.init_lr, rng,
                               batch_size=config.init_batch_size,
                               max_epochs=config.init_max_epochs,
                               window=config.init_window, tol=config.init_tol)


@dataclass
class EpisodeStats:
    ret: float
    steps: int
    supervised_loss: float
    rates: tuple
    fallbacks: int = 0


class Learner:
    """Mutable training state owned by one trainer: representations, policy, critic.

    The learner is stepped in place; use :meth:`snapshot` for read-only copies.
    """

    def __init__(self, config, n_actions, n_features, rng):
        self.config = config
        self.n_actions = n_actions
        self.n_features = n_features
        self.critic = init_critic(n_features, config.lam, config.gamma)
        if config.uses_representations:
            self.rep = actrep.init_params(n_actions, n_features, config.d_e, rng,
                                          scale=config.init_scale, tau=config.tau,
                                          metric=config.similarity)
            self.policy = init_internal_policy(config.d_e, n_features, config.sigma,
                                               config.learn_sigma, config.projection_bound)
        else:
            self.rep = None
            self.policy = init_softmax_policy(n_actions, n_features)
        self.t = 0
        self._returns = deque(maxlen=config.baseline_window)
        self._replay = deque(maxlen=max(config.replay_batch, 1))

    def snapshot(self):
        return {
            "rep": None if self.rep is None else self.rep.copy(),
            "policy": self.policy.copy(),
            "critic": self.critic.copy(),
            "t": self.t,
        }

    # -- action selection -------------------------------------------------

    def act(self, phi, rng, reps=None):
        """Return ``(action, aux)`` where aux carries what the actor update needs."""
        if self.rep is None:
            p = softmax_probs(phi, self.policy)
            a = min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), p.shape[0] - 1)
            return a, p
        mu = policy_mean(phi, self.policy)
        xi = rng.standard_normal(mu.shape[0])
        # the score uses the unclamped draw; clamping only affects decoding
        raw = mu + self.policy.sigma * xi
        e = np.minimum(np.maximum(raw, -1.0), 1.0)
        if reps is None:
            reps = self.rep.representations
        a = int(kernels.nearest_action(reps, e, METRICS[self.rep.metric]))
        return a, (raw, mu)

    def greedy_action(self, phi):
        if self.rep is None:
            return int(np.argmax(self.policy.theta @ phi))
        mu = policy_mean(phi, self.policy)
        return int(kernels.nearest_action(self.rep.representations, mu, METRICS[self.rep.metric]))

    # -- updates ----------------------------------------------------------

    def _actor_step(self, phi, aux, a, weight, alpha):
        if self.rep is None:
            g = -aux
            g[a] += 1.0
            self.policy.theta += (alpha * weight) * np.outer(g, phi)
            return
        e, mu = aux
        pol = self.policy
        var = np.exp(2.0 * pol.log_sigma)
        diff = e - mu
        pol.M += (alpha * weight) * np.outer(diff / var * (1.0 - mu * mu), phi)
        if pol.learn_sigma:
            pol.log_sigma += (alpha * weight) * (diff * diff / var - 1.0)
        if pol.bound is not None:
            np.clip(pol.M, -pol.bound, pol.bound, out=pol.M)

    def _critic_step(self, phi, delta, alpha):
        c = self.critic
        c.trace *= c.gamma * c.lam
        c.trace += phi
        c.omega += (alpha * delta) * c.trace

    def _rep_step(self, phi, a, phi2, alpha, update):
        x = np.concatenate([phi, phi2])
        self._replay.append((x, a))
        if self.config.replay_batch > 0:
            X = np.array([r[0] for r in self._replay])
            acts = np.array([r[1] for r in self._replay], dtype=np.int64)
        else:
            X = x[None, :]
            acts = np.array([a], dtype=np.int64)
        rep = self.rep
        loss, gW, gU = kernels.supervised_grad(rep.W, rep.U, X, acts, float(rep.tau),
                                               METRICS[rep.metric])
        if update and alpha > 0.0:
            if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gU))):
                raise FloatingPointError(f"non-finite representation gradient at step {self.t}")
            rep.W -= alpha * gW
            rep.U -= alpha * gU
        return loss

    # -- episodes -----------------------------------------------------------

    def uses_fused_kernel(self, env):
        """Maze actor-critic runs with fixed representations go through one compiled kernel."""
        cfg = self.config
        if not isinstance(env, Maze) or cfg.algorithm == "reinforce-ra":
            return False
        return self.rep is None or (cfg.representation_frozen and cfg.replay_batch == 0)

    def run_episode(self, env, schedule, rng):
        cfg = self.config
        if self.uses_fused_kernel(env):
            return self._run_maze_fused(env, schedule, rng)
        if cfg.algorithm == "reinforce-ra":
            return self._run_reinforce(env, schedule, rng)
        learn_rep = self.rep is not None and not cfg.representation_frozen
        reps = None if self.rep is None else self.rep.representations
        self.critic.reset_trace()
        s = env.reset(rng)
        phi = env.features(s)
        ret, steps, loss_sum, disc = 0.0, 0, 0.0, 1.0
        rates = schedule.rates(self.t)
        while True:
            a, aux = self.act(phi, rng, reps)
            s2, r, term = env.step(s, a, rng)
            phi2 = env.features(s2)
            rates = schedule.rates(self.t)
            a_w, a_phi, a_th = rates
            omega = self.critic.omega
            v2 = 0.0 if term else float(omega @ phi2)
            delta = r + cfg.gamma * v2 - float(omega @ phi)
            weight = delta * disc if cfg.unbiased else delta
            if a_th > 0.0 and weight != 0.0:
                self._actor_step(phi, aux, a, weight, a_th)
            if a_w > 0.0:
                self._critic_step(phi, delta, a_w)
            if self.rep is not None:
                loss_sum += self._rep_step(phi, a, phi2, a_phi, learn_rep)
                if learn_rep and a_phi > 0.0:
                    reps = self.rep.representations
            ret += r
            steps += 1
            disc *= cfg.gamma
            self.t += 1
            s, phi = s2, phi2
            if term:
                break
        loss = loss_sum / steps if self.rep is not None else math.nan
        return EpisodeStats(ret, steps, loss, rates, getattr(env, "pop_fallbacks", lambda: 0)())

    def _run_maze_fused(self, env, schedule, rng):
        cfg = self.config
        n = env.max_steps
        coins = rng.random(n)
        repl = rng.integers(0, env.n_actions, n)
        sched = np.array([[r.base, r.exponent, r.offset]
                          for r in (schedule.critic, schedule.representation, schedule.actor)])
        pol = self.policy
        hyper = np.array([cfg.gamma, cfg.lam, cfg.tau, float(getattr(pol, "learn_sigma", False)),
                          getattr(pol, "bound", None) or 0.0, float(cfg.unbiased)])
        c = self.critic
        if self.rep is None:
            u = rng.random(n)
            ret, steps, loss_sum, t, rates = kernels.maze_flat_episode(
                *env.kernel_args(), pol.theta, c.omega, c.trace, hyper, sched, self.t,
                coins, repl, u)
            loss = math.nan
        else:
            xi = rng.standard_normal((n, cfg.d_e))
            ret, steps, loss_sum, t, rates = kernels.maze_ra_episode(
                *env.kernel_args(), self.rep.representations, self.rep.U, pol.M, pol.log_sigma,
                c.omega, c.trace, hyper, sched, self.t, coins, repl, xi,
                METRICS[self.rep.metric], True)
            loss = loss_sum / steps
        self.t = int(t)
        return EpisodeStats(float(ret), int(steps), float(loss), tuple(float(r) for r in rates))

    def _run_reinforce(self, env, schedule, rng):
        cfg = self.config
        learn_rep = not cfg.representation_frozen
        reps = self.rep.representations
        s = env.reset(rng)
        phi = env.features(s)
        record = []
        ret, loss_sum = 0.0, 0.0
        while True:
            a, aux = self.act(phi, rng, reps)
            s2, r, term = env.step(s, a, rng)
            phi2 = env.features(s2)
            rates = schedule.rates(self.t)
            record.append((phi, aux, a, r, rates[2]))
            loss_sum += self._rep_step(phi, a, phi2, rates[1], learn_rep)
            if learn_rep and rates[1] > 0.0:
                reps = self.rep.representations
            ret += r
            self.t += 1
            s, phi = s2, phi2
            if term:
                break
        rewards = np.array([rec[3] for rec in record])
        togo = np.zeros(len(record))
        acc = 0.0
        for i in range(len(record) - 1, -1, -1):
            acc = rewards[i] + cfg.gamma * acc
            togo[i] = acc
        baseline = float(np.mean(self._returns)) if self._returns else 0.0
        disc = 1.0
        for (phi_t, aux, a, _, a_th), g in zip(record, togo):
            weight = (g - baseline) * (disc if cfg.unbiased else 1.0)
            if a_th > 0.0 and weight != 0.0:
                self._actor_step(phi_t, aux, a, weight, a_th)
            disc *= cfg.gamma
        self._returns.append(togo[0])
        return EpisodeStats(ret, len(record), loss_sum / len(record), rates,
                            getattr(env, "pop_fallbacks", lambda: 0)())

    def check_finite(self, episode):
        arrays = {"critic.omega": self.critic.omega}
        if self.rep is None:
            arrays["policy.theta"] = self.policy.theta
        else:
            arrays.update({"rep.W": self.rep.W, "rep.U": self.rep.U, "policy.M": self.policy.M,
                           "policy.log_sigma": self.policy.log_sigma})
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(
                    f"{name} became non-finite in episode {episode} (global step {self.t})")


def run_episode(env, learner, schedule, rng):
    """Run one episode in place on ``learner``; returns ``(return, learner, t_global)``."""
    stats = learner.run_episode(env, schedule, rng)
    return stats.ret, learner, learner.t


@dataclass
class TrainResult:
    metrics: MetricsLog
    learner: Learner
    init_history: list


def streams(seed):
    """Independent generators for parameter init, random rollouts, init SGD and online learning."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def train(config, metadata=None, on_episode=None):
    """Run the full algorithm for ``config.total_episodes`` episodes."""
    violations = validate_schedule(config.schedule)
    if violations and not config.allow_invalid_schedule:
        raise ValueError("learning-rate schedule rejected: " + ", ".join(violations))
    env = config.env
    rng_params, rng_rollout, rng_init, rng_online = streams(config.seed)
    learner = Learner(config, env.n_actions, env.n_features, rng_params)
    history = []
    if learner.rep is not None and config.n_init_trajectories > 0:
        data = collect_random_trajectories(env, config.n_init_trajectories, rng_rollout)
        history = initialize_representations(data, learner.rep, config, rng_init, env)
    log = MetricsLog(metadata=dict(metadata or {}, seed=config.seed, algorithm=config.algorithm))
    for ep in range(config.total_episodes):
        t0 = time.perf_counter()
        stats = learner.run_episode(env, config.schedule, rng_online)
        learner.check_finite(ep)
        log.append(episode=ep, ret=stats.ret, steps=stats.steps,
                   supervised_loss=stats.supervised_loss, rates=stats.rates,
                   fallbacks=stats.fallbacks, wall_ms=1000.0 * (time.perf_counter() - t0))
        if on_episode is not None:
            on_episode(ep, learner)
    return TrainResult(log, learner, history)
