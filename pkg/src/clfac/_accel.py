"""Acceleration switch.

The hot loops in :mod:`clfac.kernels` are compiled with numba when it is
importable and the environment variable ``CLFAC_NUMBA`` is not set to a
falsy value (``0``, ``false``, ``no``, ``off``).  Every kernel has a pure
numpy twin next to its call site, written with the same floating-point
operation order, so switching paths never changes results.
"""
import os

_FALSY = {"0", "false", "no", "off"}

ENABLED = os.environ.get("CLFAC_NUMBA", "1").strip().lower() not in _FALSY

try:
    import numba  # noqa: F401
    AVAILABLE = True
except ImportError:
    AVAILABLE = False


def use_numba() -> bool:
    return ENABLED and AVAILABLE
