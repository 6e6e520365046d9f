"""Numerical backend selection.

Hot kernels (ray tracing, sparse matvec, Poisson sampling) exist in two
implementations: a numba-jitted one and a pure-numpy fallback.  The active
one is chosen once at import time from the ``LOWSPECT_BACKEND`` environment
variable:

* ``auto`` (default) -- numba if importable, else numpy
* ``numba``          -- require numba, raise if unavailable
* ``numpy``          -- force the pure-numpy fallback

Both implementations follow the same operation order, so results agree to
floating-point reproduction on the same machine.
"""

import os


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def resolve_backend() -> str:
    choice = os.environ.get("LOWSPECT_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"LOWSPECT_BACKEND must be one of auto/numba/numpy, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _numba_available():
            raise ImportError("LOWSPECT_BACKEND=numba but numba is not importable")
        return "numba"
    return "numba" if _numba_available() else "numpy"


BACKEND = resolve_backend()
