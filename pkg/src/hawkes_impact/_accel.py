"""Numba switch.

Set ``HAWKES_IMPACT_NUMBA=0`` before import to run every hot kernel through
its pure Python/NumPy fallback. Both paths draw from the same
``numpy.random.Generator`` and produce identical streams.
"""
import os

_FLAG = os.environ.get("HAWKES_IMPACT_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = numba is not None and _FLAG not in ("0", "false", "no", "off")


def jit(fn):
    """Compile ``fn`` in nopython mode when numba is enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(fn)
    return fn
