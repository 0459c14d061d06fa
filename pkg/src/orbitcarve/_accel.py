"""Kernel backend selection.

Hot loops (rasterization, point-to-triangle queries) ship twice: a numba
``@njit`` kernel and a vectorized numpy path. ``ORBITCARVE_BACKEND=numpy``
(or ``ORBITCARVE_DISABLE_NUMBA=1``) forces the numpy path; it is also used
automatically when numba cannot be imported.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_backend() -> str:
    if os.environ.get("ORBITCARVE_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    value = os.environ.get("ORBITCARVE_BACKEND", "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"ORBITCARVE_BACKEND must be 'numba' or 'numpy', got {value!r}")
    return value


BACKEND = _env_backend() if HAVE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True, nogil=True`` defaults, or identity."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def resolve(backend: str | None) -> str:
    if backend is None:
        return BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend
