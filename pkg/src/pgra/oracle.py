"""Brute-force numerical checks on tiny tabular MDPs.

The factored policy picks an embedding ``e ~ N(mu(s), sigma^2)`` clamped to
the box and decodes it with ``nearest_action``. The distribution it induces
over actions is estimated here by quadrature over the box, with the clamp atoms (box faces
and corners) as extra degenerate cells. In two dimensions a product grid of
cells carries exact normal-CDF masses and each cell goes to the action its
centre decodes to. In one dimension every similarity is an affine function of
e (up to a term shared by all actions), so the decoder's switch points inside
a cell are located exactly, the cell is split there, and the pieces get
trapezoid-rule masses.
One-dimensional embeddings also admit an exact answer from normal CDFs, which
the checks use as the reference.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

TINY_FORMAT = "pgra-tiny-mdp"
TINY_VERSION = 1
TRUNCATION = 1e-8
_SQRT2PI = math.sqrt(2.0 * math.pi)


def truncation_horizon(gamma, tol=TRUNCATION, value_scale=1.0):
    """Smallest T with gamma**T * max(1, value_scale) < tol.

    With value_scale = max|R| / (1 - gamma) this bounds the absolute
    truncation error of T Bellman backups started from zero.
    """
    if gamma <= 0.0:
        return 1
    if gamma >= 1.0:
        raise ValueError("undiscounted problems need an explicit horizon")
    target = tol / max(1.0, value_scale)
    return int(math.floor(math.log(target) / math.log(gamma))) + 1


@dataclass
class TinyMDP:
    P: np.ndarray           # (S, A, S)
    R: np.ndarray           # (S, A)
    gamma: float
    d0: np.ndarray          # (S,)
    features: np.ndarray = None
    horizon: int = None
    state_names: list = field(default=None)
    action_names: list = field(default=None)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.d0 = np.asarray(self.d0, dtype=np.float64)
        S, A = self.R.shape
        if self.P.shape != (S, A, S):
            raise ValueError(f"P has shape {self.P.shape}, expected {(S, A, S)}")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("each P(.|s,a) must be a distribution (sum to 1 within 1e-12)")
        if self.d0.shape != (S,) or np.any(self.d0 < 0) or abs(self.d0.sum() - 1.0) > 1e-12:
            raise ValueError("d0 must be a distribution over states")
        if not np.all(np.isfinite(self.R)):
            raise ValueError("rewards must be finite")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.features is None:
            self.features = np.eye(S)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape[0] != S:
            raise ValueError("need one feature row per state")
        if self.horizon is None:
            scale = np.max(np.abs(self.R), initial=0.0) / max(1.0 - self.gamma, 1e-300)
            self.horizon = truncation_horizon(self.gamma, value_scale=scale)
        if self.state_names is None:
            self.state_names = [f"s{i}" for i in range(S)]
        if self.action_names is None:
            self.action_names = [f"a{i}" for i in range(A)]

    @property
    def n_states(self):
        return self.R.shape[0]

    @property
    def n_actions(self):
        return self.R.shape[1]


def random_tiny_mdp(n_states, n_actions, seed, gamma=0.9, reward_scale=1.0, n_features=None):
    """Dense random transitions, uniform rewards in [-scale, scale]."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    R = reward_scale * rng.uniform(-1.0, 1.0, (n_states, n_actions))
    d0 = rng.dirichlet(np.ones(n_states))
    d0 /= d0.sum()
    feats = None if n_features is None else rng.uniform(-1.0, 1.0, (n_states, n_features))
    return TinyMDP(P, R, gamma, d0, feats)


def save_tiny_mdp(mdp, path):
    doc = {
        "format": TINY_FORMAT, "version": TINY_VERSION,
        "states": list(mdp.state_names), "actions": list(mdp.action_names),
        "P": mdp.P.tolist(), "R": mdp.R.tolist(), "gamma": mdp.gamma,
        "d0": mdp.d0.tolist(), "features": mdp.features.tolist(), "horizon": mdp.horizon,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_tiny_mdp(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != TINY_FORMAT:
        raise ValueError(f"{path}: not a tiny-MDP file")
    if doc.get("version") != TINY_VERSION:
        raise ValueError(f"{path}: unsupported tiny-MDP version {doc.get('version')!r}")
    return TinyMDP(doc["P"], doc["R"], doc["gamma"], doc["d0"], doc.get("features"),
                   doc.get("horizon"), doc.get("states"), doc.get("actions"))


# -- exact evaluation ------------------------------------------------------

def _check_pi(mdp, pi):
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy table has shape {pi.shape}, expected {mdp.R.shape}")
    return pi


def dp_value(mdp, pi):
    """Truncated Bellman evaluation. Returns ``(v, q)``."""
    pi = _check_pi(mdp, pi)
    v = np.zeros(mdp.n_states)
    q = mdp.R.copy()
    for _ in range(mdp.horizon):
        q = mdp.R + mdp.gamma * (mdp.P @ v)
        v = (pi * q).sum(axis=1)
    return v, q


def solve_value(mdp, pi):
    """v = (I - gamma P_pi)^-1 r_pi by a direct linear solve (gamma < 1)."""
    pi = _check_pi(mdp, pi)
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    r_pi = (pi * mdp.R).sum(axis=1)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)


def discounted_occupancy(mdp, pi):
    """sum_t gamma^t Pr(S_t = s) from d0, truncated at the MDP horizon."""
    pi = _check_pi(mdp, pi)
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    p = mdp.d0.copy()
    d = np.zeros(mdp.n_states)
    w = 1.0
    for _ in range(mdp.horizon):
        d += w * p
        p = p @ P_pi
        w *= mdp.gamma
    return d


def ngram_to_tiny(mdp, gamma=1.0):
    """Unroll an n-gram recommender MDP over time into a tabular one.

    States are (n-gram, step) pairs plus one absorbing terminal state; the
    reward table holds expected immediate rewards.
    """
    from .envs.recsys import RecState

    cat = mdp.catalog
    A = cat.n_items
    order = [RecState(tuple(s), 0) for s in mdp.start_states]
    index = {s: i for i, s in enumerate(order)}
    k = 0
    while k < len(order):
        s = order[k]
        k += 1
        for a in range(A):
            items, _, _ = mdp.distribution(s.items, a)
            for x in items:
                nxt = RecState(s.items[1:] + (int(x),), s.t + 1)
                if nxt.t < mdp.horizon and mdp.has_state(nxt.items) and nxt not in index:
                    index[nxt] = len(order)
                    order.append(nxt)
    S = len(order) + 1
    term = S - 1
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    P[term, :, term] = 1.0
    for s, i in index.items():
        for a in range(A):
            items, probs, _ = mdp.distribution(s.items, a)
            for x, p in zip(items, probs):
                if int(x) == cat.item_ids[a]:
                    R[i, a] += p * cat.rewards[a]
                nxt = RecState(s.items[1:] + (int(x),), s.t + 1)
                P[i, a, index.get(nxt, term)] += p
    d0 = np.zeros(S)
    for s, p in zip(mdp.start_states, mdp.start_probs):
        d0[index[RecState(tuple(s), 0)]] += p
    names = [f"{s.items}@{s.t}" for s in order] + ["terminal"]
    horizon = mdp.horizon if gamma >= 1.0 else None
    return TinyMDP(P, R, gamma, d0, None, horizon, names, [str(i) for i in cat.item_ids])


# -- quadrature over the embedding box ---------------------------------------

def _norm_pdf(x, mu, sigma):
    z = (x - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * _SQRT2PI)


class Cells(NamedTuple):
    centers: np.ndarray     # (K + 2,): interior centres then the atoms at -1 and +1
    mass: np.ndarray
    d_mu: np.ndarray        # d mass / d mu
    d_log_sigma: np.ndarray


def _grid(resolution):
    if not (np.isfinite(resolution) and 0.0 < resolution <= 2.0):
        raise ValueError(f"invalid resolution {resolution!r}: need 0 < resolution <= 2")
    K = int(math.ceil(2.0 / resolution - 1e-9))
    return np.linspace(-1.0, 1.0, K + 1)


def cells_1d(mu, sigma, resolution):
    """Per-cell probability of the clamped normal marginal and its derivatives.

    Cell masses are exact CDF differences, so they telescope to one with the atoms.
    """
    x = _grid(resolution)
    z = (x - mu) / sigma
    phi = np.exp(-0.5 * z * z) / _SQRT2PI
    cdf = ndtr(z)
    centers = np.concatenate([0.5 * (x[:-1] + x[1:]), [-1.0, 1.0]])
    mass = np.concatenate([np.diff(cdf), [cdf[0], 1.0 - cdf[-1]]])
    d_mu = np.concatenate([(phi[:-1] - phi[1:]) / sigma, [-phi[0] / sigma, phi[-1] / sigma]])
    zp = z * phi
    d_ls = np.concatenate([zp[:-1] - zp[1:], [-zp[0], zp[-1]]])
    return Cells(centers, mass, d_mu, d_ls)


def _lines(rep):
    """Slope and intercept of each action's similarity along a 1-D embedding."""
    w = rep.representations[0]
    if rep.metric == "sqeuclid":
        return 2.0 * w, -w * w      # -(e - w)^2 = 2we - w^2 - e^2
    return w.copy(), np.zeros_like(w)


def _pieces(slope, icpt, start, lo, hi):
    """Walk the upper envelope of the lines on [lo, hi] from action ``start``."""
    out = []
    cur, pos = int(start), lo
    while True:
        gain = slope - slope[cur]
        ahead = gain > 0.0
        if not ahead.any():
            break
        t = np.full(slope.shape, np.inf)
        t[ahead] = (icpt[cur] - icpt[ahead]) / gain[ahead]
        # a line crossing right at pos already dominates just to its right
        t[t < pos - 1e-12 * max(1.0, abs(pos))] = np.inf
        nxt = float(t.min())
        if nxt >= hi:
            break
        nxt = max(nxt, pos)
        if nxt > pos:
            out.append((pos, nxt, cur))
        tied = np.flatnonzero(t <= nxt + 1e-15 * max(1.0, abs(nxt)))
        cur = int(tied[np.argmax(slope[tied])])
        pos = nxt
    out.append((pos, hi, cur))
    return out


def _split_cells_1d(mu, sigma, rep, resolution):
    """Per-action (mass, d mass/d mu, d mass/d log sigma) with exact in-cell switches."""
    x = _grid(resolution)
    A = rep.n_actions
    dec = decode_many(rep.representations, x[:, None], rep.metric)

    def dens(pts):
        p = _norm_pdf(pts, mu, sigma)
        z = (pts - mu) / sigma
        return np.stack([p, p * z / sigma, p * (z * z - 1.0)])

    f = dens(x)
    seg = 0.5 * (x[1:] - x[:-1]) * (f[:, :-1] + f[:, 1:])           # (3, K)
    same = dec[:-1] == dec[1:]
    out = np.zeros((3, A))
    for k in range(3):
        out[k] = np.bincount(dec[:-1][same], weights=seg[k][same], minlength=A)
    slope, icpt = _lines(rep)
    for i in np.flatnonzero(~same):
        for l, r, a in _pieces(slope, icpt, dec[i], x[i], x[i + 1]):
            out[:, a] += 0.5 * (r - l) * (dens(np.array([l]))[:, 0] + dens(np.array([r]))[:, 0])
    zl = (-1.0 - mu) / sigma
    zu = (1.0 - mu) / sigma
    pl = math.exp(-0.5 * zl * zl) / _SQRT2PI
    pu = math.exp(-0.5 * zu * zu) / _SQRT2PI
    out[:, dec[0]] += (ndtr(zl), -pl / sigma, -zl * pl)
    out[:, dec[-1]] += (ndtr(-zu), pu / sigma, zu * pu)
    return out


def decode_many(reps, E, metric="sqeuclid"):
    """Vectorised nearest_action for rows of E (lowest id wins ties)."""
    E = np.atleast_2d(E)
    out = np.empty(E.shape[0], dtype=np.int64)
    step = max(1, 2_000_000 // max(1, reps.size))
    for i in range(0, E.shape[0], step):
        B = E[i:i + step]
        if metric == "sqeuclid":
            z = -((B[:, :, None] - reps[None, :, :]) ** 2).sum(axis=1)
        else:
            z = B @ reps
        out[i:i + step] = np.argmax(z, axis=1)
    return out


class PolicyEstimate(NamedTuple):
    probs: np.ndarray
    stderr: np.ndarray


def _product(arrays):
    out = arrays[0]
    for a in arrays[1:]:
        out = np.multiply.outer(out, a)
    return out.ravel()


def _cell_actions(rep, centers_per_dim):
    grids = np.meshgrid(*centers_per_dim, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return decode_many(rep.representations, pts, rep.metric)


def overall_policy(policy, rep, phi, resolution=1e-3, rng=None, n_samples=200_000):
    """Action distribution induced by the internal policy and the decoder.

    Quadrature for d_e <= 2; Monte Carlo (with standard errors) above that.
    """
    from .policy import policy_mean  # local to keep the import graph flat

    mu = policy_mean(phi, policy)
    sig = policy.sigma
    A = rep.n_actions
    d = mu.shape[0]
    if d > 2:
        rng = np.random.default_rng(0) if rng is None else rng
        e = np.clip(mu + sig * rng.standard_normal((n_samples, d)), -1.0, 1.0)
        counts = np.bincount(decode_many(rep.representations, e, rep.metric), minlength=A)
        p = counts / n_samples
        return PolicyEstimate(p, np.sqrt(p * (1.0 - p) / n_samples))
    if d == 1:
        return PolicyEstimate(_split_cells_1d(mu[0], sig[0], rep, resolution)[0], np.zeros(A))
    cells = [cells_1d(mu[k], sig[k], resolution) for k in range(d)]
    acts = _cell_actions(rep, [c.centers for c in cells])
    mass = _product([c.mass for c in cells])
    return PolicyEstimate(np.bincount(acts, weights=mass, minlength=A), np.zeros(A))


def overall_policy_prob(policy, rep, phi, a, resolution=1e-3):
    if not 0 <= a < rep.n_actions:
        raise ValueError(f"action {a} out of range")
    return float(overall_policy(policy, rep, phi, resolution).probs[a])


def overall_policy_grad_mu(policy, rep, phi, resolution=1e-3):
    """Quadrature estimate of d pi_o(a|s) / d mu_k, shape (d_e, |A|)."""
    from .policy import policy_mean

    mu = policy_mean(phi, policy)
    sig = policy.sigma
    d = mu.shape[0]
    if d > 2:
        raise ValueError("quadrature needs d_e <= 2")
    if d == 1:
        return _split_cells_1d(mu[0], sig[0], rep, resolution)[1][None, :]
    cells = [cells_1d(mu[k], sig[k], resolution) for k in range(d)]
    acts = _cell_actions(rep, [c.centers for c in cells])
    out = np.empty((d, rep.n_actions))
    for k in range(d):
        w = _product([c.d_mu if j == k else c.mass for j, c in enumerate(cells)])
        out[k] = np.bincount(acts, weights=w, minlength=rep.n_actions)
    return out


def _intervals_1d(rep):
    """Preimage [lo, hi] of each action on [-1, 1] for one-dimensional embeddings."""
    r = rep.representations[0]
    A = r.shape[0]
    lo = np.full(A, np.nan)
    hi = np.full(A, np.nan)
    if rep.metric == "sqeuclid":
        # unique values, each owned by the lowest id holding it
        vals, first = np.unique(r, return_index=True)
        owners = np.array([np.flatnonzero(r == v).min() for v in vals])
        mids = 0.5 * (vals[:-1] + vals[1:])
        edges = np.concatenate([[-np.inf], mids, [np.inf]])
        for k, a in enumerate(owners):
            lo[a], hi[a] = edges[k], edges[k + 1]
    else:
        top = int(np.flatnonzero(r == r.max()).min())
        bot = int(np.flatnonzero(r == r.min()).min())
        if top == bot:
            lo[top], hi[top] = -np.inf, np.inf
        else:
            lo[top], hi[top] = 0.0, np.inf
            lo[bot], hi[bot] = -np.inf, 0.0
    # points beyond the box edges collapse onto the clamp atoms
    lo = np.where(lo <= -1.0, -np.inf, lo)
    hi = np.where(hi >= 1.0, np.inf, hi)
    empty = np.isnan(lo) | (lo >= hi)
    return lo, hi, empty


def exact_overall_policy(policy, rep, phi):
    """Closed form for d_e = 1 from normal CDFs over the decoder's intervals."""
    from .policy import policy_mean

    if rep.d_e != 1:
        raise ValueError("the closed form is only available for d_e = 1")
    mu = policy_mean(phi, policy)[0]
    sig = policy.sigma[0]
    lo, hi, empty = _intervals_1d(rep)
    with np.errstate(invalid="ignore"):
        p = ndtr((hi - mu) / sig) - ndtr((lo - mu) / sig)
    return np.where(empty, 0.0, p)


def policy_table(mdp, policy, rep, resolution=None):
    """pi_o(a|s) for every state: exact when resolution is None (d_e = 1)."""
    rows = []
    for phi in mdp.features:
        if resolution is None:
            rows.append(exact_overall_policy(policy, rep, phi))
        else:
            rows.append(overall_policy(policy, rep, phi, resolution).probs)
    return np.array(rows)


def lemma1_check(mdp, policy, rep, resolution, reference_resolution=None):
    """max_s |v(s) - sum_a int_{f^-1(a)} pi_i(e|s) q(s,a) de| under the overall policy.

    The left side and q come from exact evaluation with the reference
    distribution (closed form for d_e = 1; a grid ``reference_resolution``
    fine for d_e = 2, default resolution / 8). The right side integrates at
    ``resolution``.
    """
    if rep.d_e > 2:
        raise ValueError("identity checks need d_e <= 2")
    if rep.d_e == 1:
        ref = policy_table(mdp, policy, rep)
    else:
        ref = policy_table(mdp, policy, rep, reference_resolution or resolution / 8.0)
    v, q = dp_value(mdp, ref)
    quad = policy_table(mdp, policy, rep, resolution)
    rhs = (quad * q).sum(axis=1)
    return float(np.max(np.abs(v - rhs)))


class GradientCheck(NamedTuple):
    relative: float
    absolute: float
    finite_difference: np.ndarray
    analytic: np.ndarray


def finite_difference_gradient(f, x, h=1e-5):
    """Central differences of a scalar function at x (any shape)."""
    if not h > 0:
        raise ValueError("h must be > 0")
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def relative_discrepancy(est, ref, floor=1e-2):
    """max_i |est_i - ref_i| / max(|ref_i|, floor * max|ref|, 1e-300)."""
    est = np.asarray(est).ravel()
    ref = np.asarray(ref).ravel()
    scale = np.maximum(np.abs(ref), max(floor * np.max(np.abs(ref), initial=0.0), 1e-300))
    return float(np.max(np.abs(est - ref) / scale))


def objective(mdp, policy, rep):
    """J_o = d0 . v under the exact overall policy (d_e = 1)."""
    v, _ = dp_value(mdp, policy_table(mdp, policy, rep))
    return float(mdp.d0 @ v)


def lemma2_check(mdp, policy, rep, h=1e-5, resolution=1e-4):
    """Compare dJ/dM by central differences with the integral form of the gradient.

    The integral form is sum_s d(s) sum_a q(s,a) int_{f^-1(a)} d pi_i(e|s) / dM de,
    with d the discounted occupancy (gamma^t weights kept) and the e-integral
    done on the quadrature grid, clamp atoms included.
    """
    if rep.d_e != 1:
        raise ValueError("the gradient check needs d_e = 1")
    pol = policy.copy()

    def J(M):
        pol.M = M
        return objective(mdp, pol, rep)

    fd = finite_difference_gradient(J, policy.M, h)
    pol.M = policy.M.copy()

    from .policy import policy_mean

    pi = policy_table(mdp, policy, rep)
    _, q = dp_value(mdp, pi)
    occ = discounted_occupancy(mdp, pi)
    g = np.zeros_like(policy.M)
    for s, phi in enumerate(mdp.features):
        mu = policy_mean(phi, policy)
        dpi = overall_policy_grad_mu(policy, rep, phi, resolution)   # (d_e, A)
        dmu = dpi @ q[s]
        g += occ[s] * np.outer(dmu * (1.0 - mu * mu), phi)
    abs_err = float(np.max(np.abs(fd - g)))
    return GradientCheck(relative_discrepancy(g, fd), abs_err, fd, g)


def random_instance(mdp, seed, d_e=1, sigma=0.25, spread=1.5):
    """Seeded internal-policy and representation parameters sized for ``mdp``."""
    from .actrep import ActionRepParams
    from .policy import init_internal_policy

    rng = np.random.default_rng(seed)
    F = mdp.features.shape[1]
    pol = init_internal_policy(d_e, F, sigma=sigma)
    pol.M = rng.uniform(-1.0, 1.0, pol.M.shape)
    rep = ActionRepParams(rng.uniform(-spread, spread, (d_e, mdp.n_actions)), np.zeros((d_e, 2 * F)))
    return pol, rep
