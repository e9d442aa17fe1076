"""Backend dispatch for the lattice kernels.

Set ACTIONSEG_BACKEND=numpy or ACTIONSEG_BACKEND=numba before import to pin a
backend; the default ("auto") uses numba when importable and falls back to the
pure numpy implementation otherwise. Both backends implement identical
recurrences and tie rules.
"""

from __future__ import annotations

import os

_requested = os.environ.get("ACTIONSEG_BACKEND", "auto").strip().lower() or "auto"

if _requested == "numpy":
    from . import kernels_numpy as _impl

    BACKEND = "numpy"
elif _requested == "numba":
    from . import kernels_numba as _impl

    BACKEND = "numba"
elif _requested == "auto":
    try:
        from . import kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        from . import kernels_numpy as _impl

        BACKEND = "numpy"
else:
    raise ValueError(
        f"ACTIONSEG_BACKEND={_requested!r} not recognized (use auto, numba or numpy)"
    )

viterbi_chain = _impl.viterbi_chain
forward_chain = _impl.forward_chain
backward_chain = _impl.backward_chain
viterbi_bigram = _impl.viterbi_bigram


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND
