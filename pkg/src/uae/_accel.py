"""Backend switch for the compiled kernels.

Set ``UAE_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy path is used silently.
"""
import os

_FLAG = os.environ.get("UAE_DISABLE_NUMBA", "").strip().lower()

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` in nopython mode with on-disk caching, or return it as is."""
    if not HAVE_NUMBA:
        return func
    import numba

    return numba.njit(cache=True)(func)


def set_threads(n):
    """Cap numba's thread pool (``UAE_THREADS``); a no-op without numba."""
    if HAVE_NUMBA and n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
