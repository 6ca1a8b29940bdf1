"""Thread configuration.

Parallel work runs in the compiled remap kernels, whose per-line results do
not depend on how lines are shared among threads. BLAS is pinned to one
thread so matrix products are reproducible bit for bit.
"""

from __future__ import annotations

import os
import sys

ENV_VAR = "VNSFLOW_THREADS"


def requested_threads(explicit: int | None = None) -> int:
    if explicit is not None:
        n = int(explicit)
    else:
        raw = os.environ.get(ENV_VAR, "")
        n = int(raw) if raw.strip() else (os.cpu_count() or 1)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    return n


def configure_threads(explicit: int | None = None) -> int:
    """Apply the thread count; call before the solvers are imported when possible."""
    n = requested_threads(explicit)
    os.environ[ENV_VAR] = str(n)
    if "numba" not in sys.modules:
        os.environ["NUMBA_NUM_THREADS"] = str(n)
    else:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)
    return n
