"""Kernel backend selection.

The quadrature inner loops exist twice: a numba ``@njit`` version (default)
and a pure-numpy version with identical semantics.  ``KGCI_BACKEND=numpy``
forces the fallback; ``KGCI_THREADS=N`` caps the worker threads used by the
parallel numba kernels.
"""

import os
import warnings

_VALID = ("numba", "numpy")


def _detect() -> str:
    choice = os.environ.get("KGCI_BACKEND", "").strip().lower()
    if choice and choice not in _VALID:
        raise ValueError(f"KGCI_BACKEND must be one of {_VALID}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        warnings.warn("numba not importable; falling back to numpy kernels")
        return "numpy"
    return "numba"


BACKEND = _detect()

if BACKEND == "numba":
    import numba

    _threads = os.environ.get("KGCI_THREADS", "").strip()
    if _threads:
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND
