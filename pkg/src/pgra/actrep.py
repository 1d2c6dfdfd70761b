"""Action representations: embedding table, transition encoder and Boltzmann decoder.

``W`` holds one raw representation per action (columns); the effective
representation is ``tanh(W)``. The encoder maps concatenated state features
``[phi(s); phi(s')]`` to an embedding ``tanh(U x)``, and the decoder scores
every action by its similarity to that embedding.
"""

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import kernels

METRICS = {"sqeuclid": kernels.SQEUCLID, "dot": kernels.DOT}


class Transition(NamedTuple):
    s: object
    a: int
    r: float
    s_next: object
    terminal: bool


class TransitionBatch(NamedTuple):
    X: np.ndarray  # (B, 2F) rows [phi(s); phi(s')]
    actions: np.ndarray  # (B,) int64

    @classmethod
    def from_transitions(cls, transitions, featurize=None):
        if featurize is None:
            rows = [np.concatenate([t.s, t.s_next]) for t in transitions]
        else:
            rows = [np.concatenate([featurize(t.s), featurize(t.s_next)]) for t in transitions]
        X = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
        actions = np.array([t.a for t in transitions], dtype=np.int64)
        return cls(X, actions)

    def __len__(self):
        return self.actions.shape[0]


@dataclass
class ActionRepParams:
    W: np.ndarray  # (d_e, |A|)
    U: np.ndarray  # (d_e, 2F)
    tau: float = 1.0
    metric: str = "sqeuclid"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature must be > 0")
        if self.metric not in METRICS:
            raise ValueError(f"unknown similarity {self.metric!r}; choose from {sorted(METRICS)}")
        if self.W.shape[0] != self.U.shape[0]:
            raise ValueError(f"W has d_e={self.W.shape[0]} but U has {self.U.shape[0]} rows")

    @property
    def d_e(self):
        return self.W.shape[0]

    @property
    def n_actions(self):
        return self.W.shape[1]

    @property
    def representations(self):
        return np.tanh(self.W)

    def copy(self):
        return replace(self, W=self.W.copy(), U=self.U.copy())


def init_params(n_actions, n_features, d_e, rng, scale=0.1, tau=1.0, metric="sqeuclid"):
    """Uniform(-scale, scale) entries; ``n_features`` is the per-state feature count."""
    W = rng.uniform(-scale, scale, size=(d_e, n_actions))
    U = rng.uniform(-scale, scale, size=(d_e, 2 * n_features))
    return ActionRepParams(W, U, tau, metric)


def zero_params(n_actions, n_features, d_e, tau=1.0, metric="sqeuclid"):
    return ActionRepParams(np.zeros((d_e, n_actions)), np.zeros((d_e, 2 * n_features)), tau, metric)


def encode_transition(phi_s, phi_next, params):
    x = np.concatenate([np.asarray(phi_s, dtype=np.float64), np.asarray(phi_next, dtype=np.float64)])
    if x.shape[0] != params.U.shape[1]:
        raise ValueError(f"encoder expects {params.U.shape[1]} inputs, got {x.shape[0]}")
    return np.tanh(params.U @ x)


def similarity_logits(e, params):
    e = np.asarray(e, dtype=np.float64)
    return kernels.similarity_logits(params.representations, e, METRICS[params.metric])


def action_likelihood(z, tau=1.0):
    if tau <= 0:
        raise ValueError("temperature must be > 0")
    z = np.asarray(z, dtype=np.float64) / tau
    ez = np.exp(z - z.max())
    return ez / ez.sum()


def _as_batch(batch):
    if isinstance(batch, TransitionBatch):
        return batch
    return TransitionBatch.from_transitions(batch)


def loss_and_grad(batch, params):
    """Mean negative log-likelihood of the observed actions and its gradients."""
    b = _as_batch(batch)
    if len(b) == 0:
        raise ValueError("empty batch")
    return kernels.supervised_grad(params.W, params.U, b.X, b.actions, float(params.tau),
                                   METRICS[params.metric])


def supervised_loss(batch, params):
    return loss_and_grad(batch, params)[0]


def supervised_update(batch, params, lr):
    """One SGD step on the supervised loss; the input params are left untouched."""
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    loss, gW, gU = loss_and_grad(batch, params)
    if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gU))):
        raise FloatingPointError(
            f"non-finite supervised gradient (loss={loss}, |W|max={np.abs(params.W).max():.3g}, "
            f"|U|max={np.abs(params.U).max():.3g})")
    out = params.copy()
    out.W -= lr * gW
    out.U -= lr * gU
    return out


def nearest_action(e, params):
    """Execution-time decoder: the most similar action, lowest id on ties."""
    e = np.asarray(e, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise ValueError("embedding must be finite")
    return int(kernels.nearest_action(params.representations, e, METRICS[params.metric]))


def train_epochs(batch, params, lr, rng, batch_size=32, max_epochs=200, window=10, tol=1e-4):
    """Mini-batch SGD on ``batch`` until the loss stops improving; mutates ``params``.

    Stops when the best loss of the last ``window`` epochs improves on the best
    before them by less than ``tol``. Returns the loss history: entry 0 is the
    full-data loss before any update, entry i the mean mini-batch loss seen
    during epoch i.
    """
    b = _as_batch(batch)
    if len(b) == 0:
        raise ValueError("no transitions to train on")
    metric = METRICS[params.metric]
    history = [float(supervised_loss(b, params))]
    for _ in range(max_epochs):
        order = rng.permutation(len(b)).astype(np.int64)
        epoch_loss = kernels.sgd_epoch(params.W, params.U, b.X, b.actions, order, batch_size,
                                       lr, float(params.tau), metric)
        if not (np.all(np.isfinite(params.W)) and np.all(np.isfinite(params.U))):
            raise FloatingPointError("representation parameters diverged during initialisation")
        history.append(float(epoch_loss))
        if len(history) > window + 1:
            recent = min(history[-window:])
            before = min(history[:-window])
            if before - recent < tol:
                break
    return history
