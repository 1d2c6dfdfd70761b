"""Backend selection for the hot numeric kernels.

Set ``PGRA_NUMBA=0`` in the environment before importing :mod:`pgra` to run
every kernel through its pure-numpy implementation instead of numba.
"""

import os

_FLAG = os.environ.get("PGRA_NUMBA", "1").strip().lower()
USE_NUMBA = _FLAG not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        import numba  # noqa: F401
    except ImportError:  # pragma: no cover - numba is a hard dependency
        USE_NUMBA = False


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
