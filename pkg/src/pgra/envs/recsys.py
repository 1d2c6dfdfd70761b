"""Synthetic clickstreams and the n-gram recommender MDP built from them.

The log generator walks a hidden sparse Markov chain over items whose
marginal popularity follows a power law. Ingestion drops rare items and
re-splices sessions; the builder aggregates (n-gram, next item) counts.

Given an n-gram state ``s`` and a recommended item ``a`` the next click is
drawn from ``P(x | s, a)`` proportional to ``C[s, x] * (boost if x == a else 1)``
where ``C`` are the log counts. If ``a`` never followed ``s`` in the log the
recommendation has no support and the plain count distribution is used
instead (a "fallback"). The step reward is the recommended item's reward when
the user clicks it, else 0.
"""

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .. import kernels
from ..features import recsys_features

MDP_FORMAT = "pgra-ngram-mdp"
MDP_VERSION = 1
LOG_HEADER = ("session_id", "item_id", "timestamp")


class ClickRecord(NamedTuple):
    session_id: str
    item_id: int
    timestamp: int


class IngestResult(NamedTuple):
    items: np.ndarray
    sequences: list
    dropped: int


class RecState(NamedTuple):
    items: tuple
    t: int


@dataclass
class ItemCatalog:
    item_ids: np.ndarray
    descriptors: np.ndarray
    rewards: np.ndarray
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.item_ids = np.asarray(self.item_ids, dtype=np.int64)
        self.descriptors = np.asarray(self.descriptors, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        n = self.item_ids.shape[0]
        if self.descriptors.shape[0] != n or self.rewards.shape != (n,):
            raise ValueError("catalog arrays disagree on the number of items")
        if np.any(np.diff(self.item_ids) <= 0):
            raise ValueError("catalog item ids must be strictly increasing")
        if np.any(self.rewards < 0) or np.any(self.rewards > 100.0):
            raise ValueError("item rewards must lie in [0, 100]")
        self.index = {int(i): k for k, i in enumerate(self.item_ids)}

    @property
    def n_items(self):
        return self.item_ids.shape[0]

    @property
    def d_item(self):
        return self.descriptors.shape[1]


# -- log synthesis and I/O -------------------------------------------------

def _lengths(spec, n, rng):
    if isinstance(spec, (int, np.integer)):
        if spec < 1:
            raise ValueError("session length must be >= 1")
        return np.full(n, int(spec), dtype=np.int64)
    lo, hi = spec
    if not 1 <= lo <= hi:
        raise ValueError("session length range must satisfy 1 <= low <= high")
    return rng.integers(lo, hi + 1, n).astype(np.int64)


def popularity(n_items, skew):
    """Power-law weights over popularity ranks 1..n_items, normalised."""
    w = np.arange(1, n_items + 1, dtype=np.float64) ** -float(skew)
    return w / w.sum()


def synthesize_log(n_items, n_sessions, session_length=(2, 20), popularity_skew=1.1, seed=0,
                   n_successors=5, jump_prob=0.2):
    """Generate a seeded click log.

    Item ids are a random permutation of popularity ranks. Each session starts
    at a popularity-weighted item; every further click jumps to a fresh
    popularity draw with probability ``jump_prob`` and otherwise follows the
    current item's hidden successor distribution.
    """
    if n_items < 2:
        raise ValueError("n_items must be >= 2")
    if n_sessions < 0:
        raise ValueError("n_sessions must be >= 0")
    if not 0.0 <= jump_prob <= 1.0:
        raise ValueError("jump_prob must lie in [0, 1]")
    if n_sessions == 0:
        return []
    rng = np.random.default_rng(seed)
    k = max(1, min(int(n_successors), n_items - 1))
    pop = popularity(n_items, popularity_skew)
    rank_to_item = rng.permutation(n_items).astype(np.int64)
    pop_cdf = np.cumsum(pop)
    pop_cdf[-1] = 1.0

    succ = np.empty((n_items, k), dtype=np.int64)
    succ_cdf = np.empty((n_items, k))
    for i in range(n_items):
        p = pop.copy()
        p[i] = 0.0
        succ[i] = rng.choice(n_items, size=k, replace=False, p=p / p.sum())
        c = np.cumsum(rng.dirichlet(np.ones(k)))
        c[-1] = 1.0
        succ_cdf[i] = c

    lengths = _lengths(session_length, n_sessions, rng)
    starts = np.minimum(np.searchsorted(pop_cdf, rng.random(n_sessions), side="right"), n_items - 1)
    total = int(lengths.sum())
    u_jump = rng.random(total)
    u_pick = rng.random(total)
    ranks = kernels.markov_walk(starts.astype(np.int64), lengths, succ, succ_cdf, pop_cdf,
                                u_jump, u_pick, float(jump_prob))
    items = rank_to_item[ranks]
    stamps = np.cumsum(rng.integers(1, 60, total))

    out = []
    pos = 0
    for s, n in enumerate(lengths):
        sid = f"s{s:07d}"
        for j in range(pos, pos + int(n)):
            out.append(ClickRecord(sid, int(items[j]), int(stamps[j])))
        pos += int(n)
    return out


def write_click_log(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        w.writerows(records)


def read_click_log(path):
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != LOG_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(LOG_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                out.append(ClickRecord(row[0], int(row[1]), int(row[2])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: item_id and timestamp must be integers") from None
    return out


# -- ingestion -------------------------------------------------------------

def _sessions(records):
    grouped = {}
    for rec in records:
        grouped.setdefault(rec.session_id, []).append(rec)
    seqs = []
    for sid, recs in grouped.items():
        recs.sort(key=lambda r: r.timestamp)
        for a, b in zip(recs, recs[1:]):
            if b.timestamp <= a.timestamp:
                raise ValueError(f"session {sid!r}: timestamps must be strictly increasing")
        seqs.append(np.array([r.item_id for r in recs], dtype=np.int64))
    return seqs


def ingest_click_log(records, min_clicks=100):
    """Drop items with fewer than ``min_clicks`` clicks and re-splice sessions.

    Sessions left empty are removed. Raises ValueError if nothing survives.
    """
    seqs = _sessions(records)
    counts = Counter()
    for s in seqs:
        counts.update(s.tolist())
    keep = np.array(sorted(i for i, c in counts.items() if c >= min_clicks), dtype=np.int64)
    if keep.size == 0:
        raise ValueError(f"no items survive the threshold of {min_clicks} clicks")
    out = []
    for s in seqs:
        s = s[np.isin(s, keep)]
        if s.size:
            out.append(s)
    return IngestResult(keep, out, len(counts) - keep.size)


def sequences_to_records(sequences):
    """Inverse of ingestion's grouping: one session per sequence, unit timestamps."""
    return [ClickRecord(f"s{k:07d}", int(item), t)
            for k, seq in enumerate(sequences) for t, item in enumerate(seq)]


# -- the n-gram MDP --------------------------------------------------------

def make_catalog(items, seed=0, d_item=8, reward_fraction=0.05, max_reward=100.0):
    """Seeded unit-norm descriptors and a sparse reward assignment."""
    items = np.asarray(sorted(set(int(i) for i in items)), dtype=np.int64)
    rng = np.random.default_rng(seed)
    desc = rng.standard_normal((items.size, d_item))
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    k = math.ceil(reward_fraction * items.size)
    rewards = np.zeros(items.size)
    chosen = rng.choice(items.size, size=k, replace=False)
    rewards[chosen] = max_reward * (1.0 - rng.random(k))  # (0, max_reward]
    return ItemCatalog(items, desc, rewards)


@dataclass
class NGramMDP:
    n: int
    catalog: ItemCatalog
    states: list
    next_items: list
    next_counts: list
    start_states: list
    start_probs: np.ndarray
    boost: float = 3.0
    horizon: int = 20
    state_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.state_index = {tuple(s): k for k, s in enumerate(self.states)}
        self.start_probs = np.asarray(self.start_probs, dtype=np.float64)
        self._start_cdf = np.cumsum(self.start_probs)
        self._start_cdf[-1] = 1.0
        if self.boost <= 0:
            raise ValueError("boost must be > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def state_dim(self):
        return self.n * self.catalog.d_item

    def has_state(self, items):
        return tuple(items) in self.state_index

    def distribution(self, items, action):
        """Return ``(next_items, probs, fallback)`` for an n-gram and action id."""
        row = self.state_index.get(tuple(items))
        if row is None:
            raise KeyError(f"state {tuple(items)} has no outgoing transitions")
        nxt = self.next_items[row]
        w = self.next_counts[row].astype(np.float64)
        target = self.catalog.item_ids[action]
        j = int(np.searchsorted(nxt, target))
        seen = j < nxt.size and nxt[j] == target
        if seen:
            w[j] *= self.boost
        return nxt, w / w.sum(), not seen

    def sample_start(self, rng):
        k = min(int(np.searchsorted(self._start_cdf, rng.random(), side="right")),
                len(self.start_states) - 1)
        return RecState(tuple(self.start_states[k]), 0)


def build_ngram_mdp(sequences, n=2, items=None, seed=0, d_item=8, reward_fraction=0.05,
                    max_reward=100.0, boost=3.0, horizon=20):
    """Aggregate (n-gram, next item) counts into an MDP with a seeded catalog."""
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
    usable = [s for s in seqs if s.size > n]
    if not usable:
        raise ValueError(f"insufficient data: need a sequence longer than n={n}")
    if items is None:
        items = np.unique(np.concatenate(seqs))
    catalog = make_catalog(items, seed, d_item, reward_fraction, max_reward)
    known = set(catalog.index)
    counts = {}
    starts = Counter()
    for s in usable:
        if not known.issuperset(s.tolist()):
            missing = sorted(set(s.tolist()) - known)
            raise ValueError(f"sequence mentions items outside the catalog: {missing[:5]}")
        starts[tuple(s[:n].tolist())] += 1
        for i in range(s.size - n):
            key = tuple(s[i:i + n].tolist())
            counts.setdefault(key, Counter())[int(s[i + n])] += 1
    states = sorted(counts)
    nxt, cnt = [], []
    for key in states:
        c = counts[key]
        ids = np.array(sorted(c), dtype=np.int64)
        nxt.append(ids)
        cnt.append(np.array([c[i] for i in ids], dtype=np.int64))
    start_states = sorted(starts)
    probs = np.array([starts[s] for s in start_states], dtype=np.float64)
    return NGramMDP(n, catalog, [list(s) for s in states], nxt, cnt,
                    [list(s) for s in start_states], probs / probs.sum(), boost, horizon)


def recsys_step(state, action, mdp, rng):
    """Advance one interaction. Returns ``(next_state, reward, terminal, fallback)``."""
    items, probs, fallback = mdp.distribution(state.items, action)
    c = np.cumsum(probs)
    k = min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), items.size - 1)
    clicked = int(items[k])
    reward = float(mdp.catalog.rewards[action]) if clicked == mdp.catalog.item_ids[action] else 0.0
    nxt = RecState(state.items[1:] + (clicked,), state.t + 1)
    terminal = nxt.t >= mdp.horizon or not mdp.has_state(nxt.items)
    return nxt, reward, terminal, fallback


def save_mdp(mdp, path):
    cat = mdp.catalog
    doc = {
        "format": MDP_FORMAT, "version": MDP_VERSION, "n": mdp.n,
        "boost": mdp.boost, "horizon": mdp.horizon,
        "catalog": {"item_ids": cat.item_ids.tolist(), "descriptors": cat.descriptors.tolist(),
                    "rewards": cat.rewards.tolist()},
        "states": [{"s": list(map(int, s)), "next": x.tolist(), "counts": c.tolist()}
                   for s, x, c in zip(mdp.states, mdp.next_items, mdp.next_counts)],
        "starts": [list(map(int, s)) for s in mdp.start_states],
        "start_probs": mdp.start_probs.tolist(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))


def load_mdp(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MDP_FORMAT:
        raise ValueError(f"{path}: not an n-gram MDP file")
    if doc.get("version") != MDP_VERSION:
        raise ValueError(f"{path}: unsupported MDP file version {doc.get('version')!r}")
    c = doc["catalog"]
    cat = ItemCatalog(c["item_ids"], c["descriptors"], c["rewards"])
    st = doc["states"]
    return NGramMDP(doc["n"], cat, [r["s"] for r in st],
                    [np.array(r["next"], dtype=np.int64) for r in st],
                    [np.array(r["counts"], dtype=np.int64) for r in st],
                    doc["starts"], doc["start_probs"], doc["boost"], doc["horizon"])


class RecSys:
    """Episodic environment over an :class:`NGramMDP`; actions index catalog items."""

    def __init__(self, mdp):
        self.mdp = mdp
        self.fallbacks = 0
        self._pending = 0

    @property
    def n_actions(self):
        return self.mdp.catalog.n_items

    @property
    def n_features(self):
        return self.mdp.state_dim

    @property
    def max_steps(self):
        return self.mdp.horizon

    def reset(self, rng):
        return self.mdp.sample_start(rng)

    def step(self, state, action, rng):
        nxt, r, term, fb = recsys_step(state, int(action), self.mdp, rng)
        if fb:
            self.fallbacks += 1
            self._pending += 1
        return nxt, r, term

    def pop_fallbacks(self):
        """Fallbacks since the last call (the per-episode metric)."""
        n, self._pending = self._pending, 0
        return n

    def features(self, state):
        return recsys_features(state.items, self.mdp.catalog)

    def features_batch(self, states):
        cat = self.mdp.catalog
        idx = np.array([[cat.index[i] for i in s.items] for s in states], dtype=np.int64)
        return cat.descriptors[idx].reshape(len(states), -1)
