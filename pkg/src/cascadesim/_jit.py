"""Numba switch.

Set ``CASCADESIM_DISABLE_JIT=1`` to route every kernel through the pure
numpy implementations.  The flag is read at call time, so tests can flip it
with ``monkeypatch.setenv``.
"""

from __future__ import annotations

import os

DISABLE_ENV = "CASCADESIM_DISABLE_JIT"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def jit_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")


def use_jit() -> bool:
    return HAVE_NUMBA and not jit_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise the identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda fn: fn
