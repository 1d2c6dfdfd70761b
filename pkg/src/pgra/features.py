"""State encoders: coupled Fourier basis (maze) and item-descriptor concatenation (recsys)."""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass(frozen=True)
class FourierBasisConfig:
    order: int = 3
    input_dim: int = 2
    coupled: bool = True
    coeffs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 0 or self.input_dim < 1:
            raise ValueError(f"invalid Fourier basis order={self.order} input_dim={self.input_dim}")
        if self.coupled:
            rows = list(itertools.product(range(self.order + 1), repeat=self.input_dim))
        else:
            rows = [tuple([0] * self.input_dim)]
            for j in range(self.input_dim):
                for c in range(1, self.order + 1):
                    r = [0] * self.input_dim
                    r[j] = c
                    rows.append(tuple(r))
        object.__setattr__(self, "coeffs", np.array(rows, dtype=np.float64))

    @property
    def n_features(self):
        return self.coeffs.shape[0]


def fourier_features(state, config):
    """cos(pi * c.s) for every coefficient vector c, in lexicographic order of c.

    Coordinates must already be normalised to [0, 1].
    """
    s = np.asarray(state, dtype=np.float64)
    if s.shape != (config.input_dim,):
        raise ValueError(f"expected state of shape ({config.input_dim},), got {s.shape}")
    if np.any(s < 0.0) or np.any(s > 1.0) or not np.all(np.isfinite(s)):
        raise ValueError(f"state {s} outside [0, 1]^{config.input_dim}; normalise first")
    return kernels.fourier_features(s, config.coeffs)


def recsys_features(items, catalog):
    """Concatenate the descriptors of the items in an n-gram state."""
    desc = catalog.descriptors
    out = []
    for it in items:
        idx = catalog.index.get(int(it))
        if idx is None:
            raise KeyError(f"item {it} not in catalog")
        out.append(desc[idx])
    return np.concatenate(out)
