import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgra import oracle
from pgra.actrep import ActionRepParams
from pgra.oracle import (TinyMDP, dp_value, exact_overall_policy, finite_difference_gradient,
                         lemma1_check, lemma2_check, overall_policy, overall_policy_prob,
                         random_instance, random_tiny_mdp, solve_value)
from pgra.policy import init_internal_policy

from conftest import TINY_PATHS


def _Phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _one_d(reps, M, sigma=0.25, F=1):
    pol = init_internal_policy(1, F, sigma=sigma)
    pol.M = np.array(M, dtype=float).reshape(1, F)
    rep = ActionRepParams(np.arctanh(np.array(reps, dtype=float)).reshape(1, -1), np.zeros((1, 2 * F)))
    return pol, rep


# -- frozen values (computed once by hand or by an independent route) ------

def test_committed_fixtures_are_small():
    assert len(TINY_PATHS) == 5
    for p in TINY_PATHS:
        m = oracle.load_tiny_mdp(p)
        assert m.n_states <= 5 and m.n_actions <= 4
        assert m.gamma ** m.horizon < 1e-8


def test_frozen_value_uniform_policy(tiny_mdps):
    m = tiny_mdps[1]
    v, _ = dp_value(m, np.full((3, 3), 1.0 / 3.0))
    np.testing.assert_allclose(v, [0.54054515, 0.45356558, 0.48290454], atol=1e-8)


def test_exact_policy_matches_hand_cdf(tiny_mdps):
    m = tiny_mdps[1]
    pol, rep = random_instance(m, 1)
    w = rep.representations[0]
    mu = math.tanh(pol.M[0, 0])          # features are one-hot, state 0
    order = np.argsort(w)                # actions 1, 2, 0 from left to right
    assert list(order) == [1, 2, 0]
    b12 = 0.5 * (w[1] + w[2])
    b20 = 0.5 * (w[2] + w[0])
    p1 = _Phi((b12 - mu) / 0.25)
    p2 = _Phi((b20 - mu) / 0.25) - p1
    p = exact_overall_policy(pol, rep, m.features[0])
    np.testing.assert_allclose(p, [1.0 - p1 - p2, p1, p2], atol=1e-12)
    np.testing.assert_allclose(p, [0.11515982, 0.05829172, 0.82654845], atol=1e-8)


def test_frozen_objective(tiny_mdps):
    m = tiny_mdps[1]
    pol, rep = random_instance(m, 1)
    assert oracle.objective(m, pol, rep) == pytest.approx(-2.3515089127216977, abs=1e-10)


# -- overall policy ---------------------------------------------------------

def test_single_action_gets_all_mass():
    pol, rep = _one_d([0.3], [0.2])
    assert overall_policy_prob(pol, rep, np.ones(1), 0, 1e-3) == pytest.approx(1.0, abs=1e-7)


def test_symmetric_pair_splits_evenly():
    pol, rep = _one_d([-0.4, 0.4], [0.0])
    p = overall_policy(pol, rep, np.ones(1), 1e-3).probs
    np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-7)
    assert p[0] == pytest.approx(p[1], abs=1e-12)


def test_partition_at_fine_resolution():
    pol, rep = _one_d([-0.7, -0.1, 0.2, 0.9], [0.4])
    p = overall_policy(pol, rep, np.ones(1), 1e-4).probs
    assert abs(p.sum() - 1.0) < 1e-6
    np.testing.assert_allclose(p, exact_overall_policy(pol, rep, np.ones(1)), atol=1e-7)


def test_narrow_preimage_inside_one_cell():
    # action 2 owns [0.001, 0.003], far narrower than a 0.1 grid cell
    pol, rep = _one_d([-0.5, 0.0, 0.002, 0.004, 0.5], [0.0])
    phi = np.ones(1)
    ref = exact_overall_policy(pol, rep, phi)
    p = overall_policy(pol, rep, phi, 0.1).probs
    assert ref[2] == pytest.approx(0.002 * 1.5957691, rel=1e-3)
    assert p[2] == pytest.approx(ref[2], rel=1e-5)


def test_duplicate_representations_go_to_lowest_id():
    pol, rep = _one_d([0.3, -0.2, 0.3], [0.1])
    p = overall_policy(pol, rep, np.ones(1), 1e-3).probs
    assert p[2] == 0.0
    np.testing.assert_allclose(p, exact_overall_policy(pol, rep, np.ones(1)), atol=1e-7)


def test_dot_metric_quadrature_matches_closed_form():
    pol, rep = _one_d([-0.6, 0.1, 0.8], [0.2])
    rep.metric = "dot"
    p = overall_policy(pol, rep, np.ones(1), 1e-3).probs
    np.testing.assert_allclose(p, exact_overall_policy(pol, rep, np.ones(1)), atol=1e-6)
    assert p[1] == 0.0


def test_two_dimensional_quadrature_agrees_with_monte_carlo():
    m = random_tiny_mdp(3, 4, seed=8)
    pol, rep = random_instance(m, 8, d_e=2)
    phi = m.features[1]
    q = overall_policy(pol, rep, phi, 2e-3).probs
    assert abs(q.sum() - 1.0) < 1e-5
    # same routine through its sampling branch on a 3-D copy with a dead third axis
    pol3 = init_internal_policy(3, pol.M.shape[1], sigma=1.0)
    pol3.M[:2] = pol.M
    pol3.log_sigma[:2] = pol.log_sigma
    W3 = np.vstack([rep.W, np.zeros((1, rep.n_actions))])
    rep3 = ActionRepParams(W3, np.zeros((3, rep.U.shape[1])))
    mc = overall_policy(pol3, rep3, phi, rng=np.random.default_rng(0), n_samples=400_000)
    assert np.all(np.abs(mc.probs - q) < 5 * mc.stderr + 1e-4)


def test_invalid_resolution_rejected():
    pol, rep = _one_d([0.1, 0.2], [0.0])
    for bad in (0.0, -1e-3, 3.0, float("nan")):
        with pytest.raises(ValueError, match="invalid resolution"):
            overall_policy(pol, rep, np.ones(1), bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2), st.floats(0.1, 1.0))
def test_overall_policy_is_distribution(seed, d_e, sigma):
    m = random_tiny_mdp(3, 4, seed=seed % 97)
    pol, rep = random_instance(m, seed, d_e=d_e, sigma=sigma)
    p = overall_policy(pol, rep, m.features[seed % 3], 1e-2 if d_e == 2 else 1e-3).probs
    assert np.all(p >= 0.0)
    assert abs(p.sum() - 1.0) < 1e-4


# -- exact evaluation ---------------------------------------------------------

def test_zero_rewards_zero_value():
    m = random_tiny_mdp(4, 3, seed=2)
    m0 = TinyMDP(m.P, np.zeros_like(m.R), m.gamma, m.d0)
    v, q = dp_value(m0, np.full((4, 3), 1 / 3))
    assert np.all(v == 0.0) and np.all(q == 0.0)


def test_geometric_series():
    m = TinyMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.5, np.ones(1))
    v, _ = dp_value(m, np.ones((1, 1)))
    assert v[0] == pytest.approx(2.0, abs=1e-8)


def test_two_state_chain_by_hand():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    R = np.array([[1.0], [2.0]])
    m = TinyMDP(P, R, 0.9, np.array([1.0, 0.0]))
    v, _ = dp_value(m, np.ones((2, 1)))
    # v1 = 2 / (1 - 0.9) = 20, v0 = 1 + 0.9 * 20 = 19
    np.testing.assert_allclose(v, [19.0, 20.0], atol=1e-7)
    np.testing.assert_allclose(solve_value(m, np.ones((2, 1))), [19.0, 20.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_dp_agrees_with_linear_solve(seed):
    rng = np.random.default_rng(seed)
    m = random_tiny_mdp(int(rng.integers(1, 8)), int(rng.integers(1, 6)), seed=seed,
                        reward_scale=float(rng.uniform(0.5, 10.0)))
    pi = rng.dirichlet(np.ones(m.n_actions), size=m.n_states)
    v, _ = dp_value(m, pi)
    assert np.max(np.abs(v - solve_value(m, pi))) < 1e-8


def test_occupancy_sums_to_effective_horizon():
    m = random_tiny_mdp(4, 2, seed=5)
    d = oracle.discounted_occupancy(m, np.full((4, 2), 0.5))
    assert d.sum() == pytest.approx(1.0 / (1.0 - m.gamma), abs=1e-7)


def test_tiny_mdp_validation():
    with pytest.raises(ValueError, match="distribution"):
        TinyMDP(np.full((1, 1, 1), 0.9), np.zeros((1, 1)), 0.9, np.ones(1))
    with pytest.raises(ValueError, match="d0"):
        TinyMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.9, np.array([0.5]))


def test_json_round_trip(tmp_path):
    m = random_tiny_mdp(3, 2, seed=4)
    oracle.save_tiny_mdp(m, tmp_path / "m.json")
    back = oracle.load_tiny_mdp(tmp_path / "m.json")
    np.testing.assert_array_equal(back.P, m.P)
    np.testing.assert_array_equal(back.R, m.R)
    assert back.horizon == m.horizon and back.gamma == m.gamma
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError, match="not a tiny-MDP"):
        oracle.load_tiny_mdp(tmp_path / "bad.json")


# -- value and gradient identities ------------------------------------------

def test_value_identity_small_on_fixtures(tiny_mdps):
    for k, m in enumerate(tiny_mdps):
        pol, rep = random_instance(m, k)
        assert lemma1_check(m, pol, rep, 1e-3) < 5e-4


def test_value_identity_converges_at_second_order(tiny_mdps):
    m = tiny_mdps[3]
    pol, rep = random_instance(m, 3)
    errs = [lemma1_check(m, pol, rep, h) for h in (4e-3, 2e-3, 1e-3, 5e-4)]
    for a, b in zip(errs, errs[1:]):
        assert a / b > 3.5


def test_value_identity_degenerate_sigma():
    m = random_tiny_mdp(3, 3, seed=6)
    pol, rep = random_instance(m, 6, sigma=1e-3)
    pi = oracle.policy_table(m, pol, rep)
    greedy = [int(np.argmax(p)) for p in pi]
    assert all(pi[s, a] > 1 - 1e-9 for s, a in enumerate(greedy))
    v, q = dp_value(m, pi)
    np.testing.assert_allclose(v, [q[s, a] for s, a in enumerate(greedy)], atol=1e-6)
    # the grid has to resolve the narrow density
    assert lemma1_check(m, pol, rep, 1e-5) < 1e-6


def test_value_identity_two_dimensional():
    m = random_tiny_mdp(3, 5, seed=9)
    pol, rep = random_instance(m, 9, d_e=2)
    assert lemma1_check(m, pol, rep, 5e-3, reference_resolution=1.25e-3) < 5e-3


def test_gradient_identity_on_fixtures(tiny_mdps):
    for k, m in enumerate(tiny_mdps):
        pol, rep = random_instance(m, k)
        assert lemma2_check(m, pol, rep).relative < 1e-3


def test_gradient_identity_constant_reward_gradients_vanish():
    m = random_tiny_mdp(4, 3, seed=1)
    mc = TinyMDP(m.P, np.ones_like(m.R), m.gamma, m.d0)
    pol, rep = random_instance(mc, 1)
    res = lemma2_check(mc, pol, rep)
    assert np.max(np.abs(res.finite_difference)) < 1e-6
    assert np.max(np.abs(res.analytic)) < 1e-6


def test_gradient_identity_reward_scaling_is_linear():
    m = random_tiny_mdp(3, 3, seed=2)
    m2 = TinyMDP(m.P, 2.0 * m.R, m.gamma, m.d0)
    pol, rep = random_instance(m, 2)
    a = lemma2_check(m, pol, rep)
    b = lemma2_check(m2, pol, rep)
    # the truncation horizon grows with the reward scale, hence not bit-exact
    np.testing.assert_allclose(b.analytic, 2.0 * a.analytic, rtol=1e-8)
    np.testing.assert_allclose(b.finite_difference, 2.0 * a.finite_difference, rtol=1e-6)


def test_identity_checks_reject_high_dimensions():
    m = random_tiny_mdp(2, 2, seed=0)
    pol, rep = random_instance(m, 0, d_e=3)
    with pytest.raises(ValueError):
        lemma1_check(m, pol, rep, 1e-2)
    with pytest.raises(ValueError):
        lemma2_check(m, pol, rep)


# -- finite differences ---------------------------------------------------------

def test_fd_quadratic_exact():
    g = finite_difference_gradient(lambda x: float(x @ x), np.array([3.0]))
    assert g[0] == pytest.approx(6.0, abs=1e-8)


def test_fd_constant_is_zero():
    g = finite_difference_gradient(lambda x: 4.2, np.zeros((2, 3)))
    assert g.shape == (2, 3) and np.all(g == 0.0)


def test_fd_sine_within_taylor_bound():
    h = 1e-3
    g = finite_difference_gradient(lambda x: math.sin(x[0]), np.zeros(1), h)
    assert abs(g[0] - 1.0) <= h * h


def test_fd_errors():
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda x: 0.0, np.zeros(1), 0.0)
    with pytest.raises(FloatingPointError):
        finite_difference_gradient(lambda x: float("inf"), np.zeros(1))


def test_relative_discrepancy_floor():
    assert oracle.relative_discrepancy([1.0, 0.0], [1.0, 0.0]) == 0.0
    # an entry near zero is measured against 1% of the largest reference entry
    assert oracle.relative_discrepancy([1.0, 1e-4], [1.0, 0.0]) == pytest.approx(1e-2)


def test_truncation_horizon():
    T = oracle.truncation_horizon(0.9)
    assert 0.9 ** T < 1e-8 <= 0.9 ** (T - 1)
    with pytest.raises(ValueError):
        oracle.truncation_horizon(1.0)


@pytest.mark.parametrize("mu,sigma", [(0.0, 0.05), (0.7, 0.3), (-1.4, 1.0)])
def test_cell_masses_telescope_to_one(mu, sigma):
    from scipy.special import ndtr
    c = oracle.cells_1d(mu, sigma, 1e-2)
    assert c.mass.sum() == pytest.approx(1.0, abs=1e-14)
    assert abs(c.d_mu.sum()) < 1e-12 and abs(c.d_log_sigma.sum()) < 1e-12
    # exact integral over the first interior cell
    assert c.mass[0] == pytest.approx(ndtr((-0.99 - mu) / sigma) - ndtr((-1 - mu) / sigma), rel=1e-12)
