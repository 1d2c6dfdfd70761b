"""Internal Gaussian policy over embeddings, linear TD(lambda) critic, actor updates.

Also holds the flat softmax policy used by the no-representation baseline.
"""

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass
class InternalPolicyParams:
    """Isotropic Gaussian with mean tanh(M phi(s)) and per-dimension log std."""

    M: np.ndarray  # (d_e, F)
    log_sigma: np.ndarray  # (d_e,)
    learn_sigma: bool = False
    bound: float | None = None  # projection box [-bound, bound] for M; None disables it

    def __post_init__(self):
        self.log_sigma = np.asarray(self.log_sigma, dtype=np.float64).reshape(-1)
        if self.log_sigma.shape[0] != self.M.shape[0]:
            raise ValueError("log_sigma must have one entry per embedding dimension")
        if self.bound is not None and self.bound <= 0:
            raise ValueError("projection bound must be > 0")

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    @property
    def d_e(self):
        return self.M.shape[0]

    def copy(self):
        return replace(self, M=self.M.copy(), log_sigma=self.log_sigma.copy())


def init_internal_policy(d_e, n_features, sigma=0.25, learn_sigma=False, bound=None):
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return InternalPolicyParams(np.zeros((d_e, n_features)), np.full(d_e, math.log(sigma)),
                                learn_sigma, bound)


def policy_mean(phi, params):
    return np.tanh(params.M @ phi)


def sample_embedding(phi, params, rng):
    mu = policy_mean(phi, params)
    xi = rng.standard_normal(mu.shape[0])
    return np.clip(mu + params.sigma * xi, -1.0, 1.0)


def log_prob(phi, e, params):
    """Gaussian log density of ``e``; the clamp to [-1, 1] is ignored."""
    mu = policy_mean(phi, params)
    sig = params.sigma
    u = (np.asarray(e) - mu) / sig
    return float(-0.5 * u @ u - params.log_sigma.sum() - 0.5 * mu.shape[0] * math.log(2 * math.pi))


def log_prob_grad(phi, e, params):
    """Gradients of ``log_prob`` w.r.t. M and (if learned) log sigma.

    Returns ``(gM, g_log_sigma)``; ``g_log_sigma`` is None for fixed sigma.
    """
    e = np.asarray(e, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(phi))):
        raise ValueError("non-finite state features or embedding")
    mu = policy_mean(phi, params)
    var = np.exp(2.0 * params.log_sigma)
    diff = e - mu
    gM = np.outer(diff / var * (1.0 - mu * mu), phi)
    g_ls = diff * diff / var - 1.0 if params.learn_sigma else None
    return gM, g_ls


def actor_update(params, advantage, grad, alpha, gamma_power=1.0):
    """theta <- Gamma(theta + alpha * gamma_power * advantage * grad).

    ``advantage`` is the TD error for actor-critic or return-to-go minus a
    baseline for REINFORCE. ``gamma_power`` is 1 for the biased practical
    update; pass gamma**t for the unbiased one.
    """
    gM, g_ls = grad
    if not np.all(np.isfinite(gM)) or (g_ls is not None and not np.all(np.isfinite(g_ls))):
        raise FloatingPointError("non-finite policy gradient")
    step = alpha * gamma_power * advantage
    out = params.copy()
    out.M += step * gM
    if params.learn_sigma and g_ls is not None:
        out.log_sigma += step * g_ls
    if params.bound is not None:
        np.clip(out.M, -params.bound, params.bound, out=out.M)
    return out


@dataclass
class CriticParams:
    omega: np.ndarray
    trace: np.ndarray
    lam: float = 0.9
    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    def copy(self):
        return replace(self, omega=self.omega.copy(), trace=self.trace.copy())

    def reset_trace(self):
        self.trace[:] = 0.0


def init_critic(n_features, lam=0.9, gamma=0.99):
    return CriticParams(np.zeros(n_features), np.zeros(n_features), lam, gamma)


def value(phi, critic):
    return float(critic.omega @ phi)


def td_error(transition, critic):
    """r + gamma * v(s') * (1 - terminal) - v(s); transition states are feature vectors."""
    bootstrap = 0.0 if transition.terminal else critic.gamma * value(transition.s_next, critic)
    return float(transition.r + bootstrap - value(transition.s, critic))


def critic_update(critic, delta, phi, alpha):
    """Accumulating-trace TD(lambda): z <- gamma*lambda*z + phi; omega += alpha*delta*z."""
    if not (math.isfinite(delta) and np.all(np.isfinite(phi))):
        raise FloatingPointError("non-finite TD error or features")
    out = critic.copy()
    out.trace *= critic.gamma * critic.lam
    out.trace += phi
    out.omega += alpha * delta * out.trace
    return out


@dataclass
class SoftmaxPolicyParams:
    """Flat linear-softmax policy over the discrete actions (no representations)."""

    theta: np.ndarray  # (|A|, F)

    def copy(self):
        return replace(self, theta=self.theta.copy())


def init_softmax_policy(n_actions, n_features):
    return SoftmaxPolicyParams(np.zeros((n_actions, n_features)))


def softmax_probs(phi, params):
    h = params.theta @ phi
    h -= h.max()
    p = np.exp(h)
    return p / p.sum()


def sample_softmax(phi, params, rng):
    p = softmax_probs(phi, params)
    a = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(a, p.shape[0] - 1), p


def softmax_log_prob_grad(phi, a, params, probs=None):
    p = softmax_probs(phi, params) if probs is None else probs
    g = -p
    g[a] += 1.0
    return np.outer(g, phi)


def softmax_actor_update(params, advantage, grad, alpha, gamma_power=1.0):
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite policy gradient")
    out = params.copy()
    out.theta += alpha * gamma_power * advantage * grad
    return out
