"""Numeric backend selection.

The hot kernels exist twice: numba-jitted per-path loops and a
vectorized pure-numpy twin written with the same operation order.
``LEVYSDE_BACKEND`` picks one at import time:

* unset or ``auto`` -- numba if importable, else numpy;
* ``numba`` -- require numba, fail loudly if missing;
* ``numpy`` -- force the fallback (useful where JIT is unavailable or
  for benchmarking; see ``benchmarks/bench_backends.py``).

``set_backend`` flips the choice at runtime for tests and benchmarks.
"""

from __future__ import annotations

import os

__all__ = ["active_backend", "set_backend", "have_numba"]

_VALID = ("numba", "numpy")

try:
    import numba  # noqa: F401

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False


def _initial() -> str:
    env = os.environ.get("LEVYSDE_BACKEND", "auto").strip().lower()
    if env in ("", "auto"):
        return "numba" if _HAVE_NUMBA else "numpy"
    if env not in _VALID:
        raise ValueError(
            f"LEVYSDE_BACKEND must be 'numba' or 'numpy', got {env!r}"
        )
    if env == "numba" and not _HAVE_NUMBA:
        raise ImportError("LEVYSDE_BACKEND=numba but numba is not importable")
    return env


_ACTIVE = _initial()


def have_numba() -> bool:
    return _HAVE_NUMBA


def active_backend() -> str:
    return _ACTIVE


def set_backend(name: str) -> str:
    """Switch backend at runtime; returns the previous one."""
    global _ACTIVE
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    prev, _ACTIVE = _ACTIVE, name
    return prev
