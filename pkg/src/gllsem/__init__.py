"""Q^k Gauss-Lobatto spectral element kit with nodal superconvergence studies."""

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

_threads = os.environ.get("GLLSEM_NUM_THREADS")
if _threads:
    # must be set before numba is first imported
    os.environ.setdefault("NUMBA_NUM_THREADS", _threads)

__version__ = "0.1.0"
