"""Backend selection for the hot inference kernel.

The numpy implementation is the default: its matmuls go through BLAS, which
benchmarks/bench_kernels.py shows beating the hand-rolled compiled loops at
every batch size the training and rollout paths actually use (the compiled
kernel only edges ahead on single-row calls).  Set LEOHANDOVER_BACKEND=cython
to require the compiled extension, or =numpy to state the default explicitly.
"""

import os

from . import pure

_forced = os.environ.get("LEOHANDOVER_BACKEND", "").lower()

if _forced == "cython":
    from . import _cy

    BACKEND = "cython"
    dueling_forward_batch = _cy.dueling_forward_batch
else:
    if _forced not in ("", "numpy"):
        raise ImportError(f"unknown LEOHANDOVER_BACKEND {_forced!r}")
    BACKEND = "numpy"
    dueling_forward_batch = pure.dueling_forward_batch
