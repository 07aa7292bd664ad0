"""Hot numeric kernels for the recurrent encoder.

A compiled extension is used when it was built; otherwise a pure-numpy
implementation with the identical contract takes over.  Set XABSA_KERNELS to
"compiled" or "pure" to force a backend (forcing "compiled" fails loudly when
the extension is missing).  `benchmarks/bench_kernels.py` compares the two.
"""

from __future__ import annotations

import os

_forced = os.environ.get("XABSA_KERNELS", "").strip().lower()
if _forced not in ("", "compiled", "pure"):
    raise ValueError(f"XABSA_KERNELS must be 'compiled' or 'pure', got {_forced!r}")

if _forced == "pure":
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _recurrent as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise ImportError(
                "XABSA_KERNELS=compiled but the extension is not built; "
                "run `pip install -e .` with a C compiler available"
            ) from None
        from . import _pure as _impl

        BACKEND = "pure"

rnn_forward = _impl.rnn_forward
rnn_backward = _impl.rnn_backward


def backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND
