import math

import numpy as np
import pytest

from pgra import policy as P
from pgra.actrep import Transition
from pgra.oracle import finite_difference_gradient


def _pol(d_e=2, F=3, sigma=0.25, learn=False, bound=None, seed=0):
    p = P.init_internal_policy(d_e, F, sigma, learn, bound)
    p.M = np.random.default_rng(seed).uniform(-1, 1, p.M.shape)
    return p


def test_mean_in_open_box():
    p = _pol()
    p.M *= 50.0
    mu = P.policy_mean(np.array([1.0, -1.0, 0.5]), p)
    assert np.all(np.abs(mu) <= 1.0)


def test_tiny_sigma_samples_the_mean():
    p = _pol(sigma=1e-12)
    phi = np.array([0.3, 0.2, -0.4])
    np.testing.assert_allclose(P.sample_embedding(phi, p, np.random.default_rng(0)),
                               P.policy_mean(phi, p), atol=1e-10)


def test_samples_are_clamped():
    p = _pol(sigma=5.0)
    rng = np.random.default_rng(1)
    e = np.array([P.sample_embedding(np.ones(3), p, rng) for _ in range(200)])
    assert np.all(np.abs(e) <= 1.0) and np.any(np.abs(e) == 1.0)


def test_clamped_gaussian_mass_mostly_interior():
    # Monte Carlo: for sigma = 0.25 and a central mean, the boundary atoms carry < 1e-3
    p = P.init_internal_policy(1, 1, 0.25)
    rng = np.random.default_rng(2)
    e = np.array([P.sample_embedding(np.ones(1), p, rng)[0] for _ in range(20_000)])
    assert np.mean(np.abs(e) == 1.0) < 1e-3


def test_log_prob_matches_scipy_free_formula():
    p = _pol(d_e=1, F=1, sigma=0.5)
    mu = math.tanh(p.M[0, 0])
    e = 0.3
    ref = -0.5 * ((e - mu) / 0.5) ** 2 - math.log(0.5) - 0.5 * math.log(2 * math.pi)
    assert P.log_prob(np.ones(1), [e], p) == pytest.approx(ref, abs=1e-12)


def test_gradient_zero_at_mean():
    p = _pol()
    phi = np.array([0.2, -0.7, 1.0])
    gM, gs = P.log_prob_grad(phi, P.policy_mean(phi, p), p)
    assert np.all(gM == 0.0) and gs is None


@pytest.mark.parametrize("point", range(10))
def test_log_prob_gradients_match_finite_differences(point):
    rng = np.random.default_rng(point)
    p = P.InternalPolicyParams(rng.uniform(-1, 1, (2, 3)), rng.uniform(-2, 0, 2), True)
    phi = rng.uniform(-1, 1, 3)
    e = rng.uniform(-1, 1, 2)
    gM, gs = P.log_prob_grad(phi, e, p)

    def f_M(M):
        return P.log_prob(phi, e, P.InternalPolicyParams(M, p.log_sigma))

    def f_s(ls):
        return P.log_prob(phi, e, P.InternalPolicyParams(p.M, ls))

    for g, fd in ((gM, finite_difference_gradient(f_M, p.M, 1e-6)),
                  (gs, finite_difference_gradient(f_s, p.log_sigma, 1e-6))):
        scale = np.maximum(np.abs(fd), 1e-2 * np.abs(fd).max())
        assert np.max(np.abs(g - fd) / scale) < 1e-5


def test_log_prob_grad_rejects_non_finite():
    with pytest.raises(ValueError):
        P.log_prob_grad(np.array([np.inf, 0, 0]), np.zeros(2), _pol())


def test_td_error_examples():
    c = P.init_critic(2, gamma=0.5)
    assert P.td_error(Transition(np.ones(2), 0, 1.0, np.ones(2), False), c) == 1.0
    c.omega = np.array([0.5, -1.0])
    # v(s) = -0.5, v(s') = 0.5, delta = 0.3 + 0.5 * 0.5 + 0.5
    t = Transition(np.array([1.0, 1.0]), 0, 0.3, np.array([2.0, 0.5]), False)
    assert P.td_error(t, c) == pytest.approx(1.05, abs=1e-15)
    term = t._replace(terminal=True)
    assert P.td_error(term, c) == pytest.approx(0.3 + 0.5, abs=1e-15)


def test_critic_td0_and_zero_rate():
    c = P.CriticParams(np.array([0.1, 0.2]), np.array([3.0, 3.0]), lam=0.0, gamma=0.9)
    phi = np.array([1.0, -2.0])
    out = P.critic_update(c, 0.5, phi, 0.1)
    np.testing.assert_allclose(out.omega, c.omega + 0.1 * 0.5 * phi, atol=1e-15)
    np.testing.assert_array_equal(c.trace, [3.0, 3.0])     # input untouched
    same = P.critic_update(c, 0.5, phi, 0.0)
    np.testing.assert_array_equal(same.omega, c.omega)


def test_critic_trace_accumulates():
    c = P.init_critic(2, lam=0.5, gamma=0.8)
    c1 = P.critic_update(c, 0.0, np.array([1.0, 0.0]), 0.1)
    c2 = P.critic_update(c1, 0.0, np.array([0.0, 1.0]), 0.1)
    np.testing.assert_allclose(c2.trace, [0.4, 1.0])
    c2.reset_trace()
    assert np.all(c2.trace == 0.0)


def test_critic_fixed_point_matches_dp():
    from pgra.oracle import TinyMDP, solve_value

    P_ = np.array([[[0.2, 0.8]], [[0.6, 0.4]]])
    R = np.array([[1.0], [-0.5]])
    m = TinyMDP(P_, R, 0.8, np.array([1.0, 0.0]))
    v_ref = solve_value(m, np.ones((2, 1)))
    rng = np.random.default_rng(0)
    c = P.init_critic(2, lam=0.0, gamma=0.8)
    s = 0
    for k in range(200_000):
        s2 = int(rng.random() < P_[s, 0, 1])
        phi, phi2 = np.eye(2)[s], np.eye(2)[s2]
        delta = P.td_error(Transition(phi, 0, R[s, 0], phi2, False), c)
        c = P.critic_update(c, delta, phi, 0.5 / (1 + k) ** 0.7)
        s = s2
    np.testing.assert_allclose(c.omega, v_ref, atol=0.05)


def test_critic_validation():
    with pytest.raises(ValueError):
        P.init_critic(2, lam=1.5)
    with pytest.raises(ValueError):
        P.init_critic(2, gamma=1.0)
    with pytest.raises(FloatingPointError):
        P.critic_update(P.init_critic(1), float("nan"), np.ones(1), 0.1)


def test_actor_update_zero_advantage_and_projection():
    p = _pol(bound=1.0)
    g = (np.ones_like(p.M), None)
    same = P.actor_update(p, 0.0, g, 0.1)
    np.testing.assert_array_equal(same.M, p.M)
    p.M[:] = 0.5
    pushed = P.actor_update(p, 1.0, g, 1.0)          # 0.5 + 1.0 -> 1.5, clamped
    assert np.all(pushed.M == 1.0)


def test_actor_update_gamma_power_and_sigma():
    p = _pol(learn=True)
    g = (np.ones_like(p.M), np.ones(2))
    out = P.actor_update(p, 2.0, g, 0.1, gamma_power=0.5)
    np.testing.assert_allclose(out.M, p.M + 0.1, atol=1e-15)
    np.testing.assert_allclose(out.log_sigma, p.log_sigma + 0.1, atol=1e-15)
    with pytest.raises(FloatingPointError):
        P.actor_update(p, 1.0, (np.full_like(p.M, np.nan), None), 0.1)


def test_bandit_update_moves_mean_towards_better_action():
    # two actions at -0.5 and +0.5; action 1 pays more
    from pgra.actrep import ActionRepParams, nearest_action
    from pgra.oracle import exact_overall_policy

    rep = ActionRepParams(np.arctanh(np.array([[-0.5, 0.5]])), np.zeros((1, 2)))
    p = P.init_internal_policy(1, 1, 0.25)
    rewards = np.array([0.0, 1.0])
    rng = np.random.default_rng(3)
    phi = np.ones(1)
    start = exact_overall_policy(p, rep, phi)[1]
    for _ in range(2000):
        mu = P.policy_mean(phi, p)
        e_raw = mu + p.sigma * rng.standard_normal(1)
        a = nearest_action(np.clip(e_raw, -1, 1), rep)
        p = P.actor_update(p, rewards[a] - 0.5, P.log_prob_grad(phi, e_raw, p), 0.05)
    # exact gradient sign: pi(1) increases with mu, so mu must have moved right
    assert P.policy_mean(phi, p)[0] > 0.2
    assert exact_overall_policy(p, rep, phi)[1] > start


def test_softmax_policy():
    sp = P.init_softmax_policy(3, 2)
    np.testing.assert_allclose(P.softmax_probs(np.ones(2), sp), [1 / 3] * 3)
    g = P.softmax_log_prob_grad(np.array([1.0, 2.0]), 1, sp)
    np.testing.assert_allclose(g, [[-1 / 3, -2 / 3], [2 / 3, 4 / 3], [-1 / 3, -2 / 3]])
    a, probs = P.sample_softmax(np.ones(2), sp, np.random.default_rng(0))
    assert 0 <= a < 3
    out = P.softmax_actor_update(sp, 1.0, g, 0.5)
    np.testing.assert_allclose(out.theta, 0.5 * g)


def test_softmax_gradient_finite_differences():
    rng = np.random.default_rng(4)
    sp = P.SoftmaxPolicyParams(rng.normal(size=(4, 3)))
    phi = rng.normal(size=3)
    g = P.softmax_log_prob_grad(phi, 2, sp)

    def f(th):
        return float(np.log(P.softmax_probs(phi, P.SoftmaxPolicyParams(th))[2]))

    np.testing.assert_allclose(g, finite_difference_gradient(f, sp.theta, 1e-6), rtol=1e-5, atol=1e-9)


def test_policy_validation():
    with pytest.raises(ValueError):
        P.init_internal_policy(2, 2, sigma=0.0)
    with pytest.raises(ValueError):
        P.init_internal_policy(2, 2, bound=-1.0)
