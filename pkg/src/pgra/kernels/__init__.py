"""Hot numeric kernels, dispatched to numba or numpy by :mod:`pgra._accel`.

Both implementations live side by side so tests and the benchmark can run
them against each other regardless of the active backend.
"""

from .._accel import USE_NUMBA
from . import _numpy as numpy_impl

if USE_NUMBA:
    from . import _numba as numba_impl
    _active = numba_impl
else:
    numba_impl = None
    _active = numpy_impl

SQEUCLID = 0
DOT = 1

fourier_features = _active.fourier_features
similarity_logits = _active.similarity_logits
nearest_action = _active.nearest_action
supervised_grad = _active.supervised_grad
sgd_epoch = _active.sgd_epoch
segments_cross = _active.segments_cross
markov_walk = _active.markov_walk
maze_ra_episode = _active.maze_ra_episode
maze_flat_episode = _active.maze_flat_episode
