"""Versioned ``.npz`` checkpoints of a learner's parameters."""

import json
from pathlib import Path

import numpy as np

from .actrep import ActionRepParams
from .policy import CriticParams, InternalPolicyParams, SoftmaxPolicyParams

CHECKPOINT_VERSION = 1


def learner_arrays(learner):
    out = {"critic.omega": learner.critic.omega, "t": np.array(learner.t, dtype=np.int64)}
    if learner.rep is None:
        out["policy.theta"] = learner.policy.theta
    else:
        out.update({"rep.W": learner.rep.W, "rep.U": learner.rep.U,
                    "policy.M": learner.policy.M, "policy.log_sigma": learner.policy.log_sigma})
    return out


def save_checkpoint(learner, path, metadata=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = learner.config
    meta = dict(metadata or {}, version=CHECKPOINT_VERSION, algorithm=cfg.algorithm,
                tau=cfg.tau, similarity=cfg.similarity, lam=cfg.lam, gamma=cfg.gamma,
                learn_sigma=cfg.learn_sigma, projection_bound=cfg.projection_bound)
    arrays = learner_arrays(learner)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


class Checkpoint:
    def __init__(self, arrays, meta):
        self.arrays = arrays
        self.meta = meta

    @property
    def t(self):
        return int(self.arrays["t"])

    def representations(self):
        if "rep.W" not in self.arrays:
            return None
        return ActionRepParams(self.arrays["rep.W"], self.arrays["rep.U"],
                               self.meta["tau"], self.meta["similarity"])

    def policy(self):
        if "policy.theta" in self.arrays:
            return SoftmaxPolicyParams(self.arrays["policy.theta"])
        return InternalPolicyParams(self.arrays["policy.M"], self.arrays["policy.log_sigma"],
                                    self.meta["learn_sigma"], self.meta["projection_bound"])

    def critic(self):
        om = self.arrays["critic.omega"]
        return CriticParams(om, np.zeros_like(om), self.meta["lam"], self.meta["gamma"])


def load_checkpoint(path):
    with np.load(Path(path), allow_pickle=False) as z:
        arrays = {k: z[k].copy() for k in z.files if k != "__meta__"}
        if "__meta__" not in z.files:
            raise ValueError(f"{path}: not a checkpoint (no metadata)")
        meta = json.loads(str(z["__meta__"]))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
    return Checkpoint(arrays, meta)


def restore(learner, ckpt):
    """Copy checkpointed parameters into ``learner`` in place."""
    a = ckpt.arrays
    learner.critic.omega[:] = a["critic.omega"]
    learner.critic.trace[:] = 0.0
    learner.t = int(a["t"])
    if learner.rep is None:
        learner.policy.theta[:] = a["policy.theta"]
    else:
        learner.rep.W[:] = a["rep.W"]
        learner.rep.U[:] = a["rep.U"]
        learner.policy.M[:] = a["policy.M"]
        learner.policy.log_sigma[:] = a["policy.log_sigma"]
