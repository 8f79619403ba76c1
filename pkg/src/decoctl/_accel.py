"""Backend selection for the hot loops.

Kernels are written twice: an explicit-loop version compiled with numba and a
vectorised numpy version. ``DECOCTL_NUMBA=0`` (or a missing numba install)
selects the numpy path everywhere.
"""

import functools
import os

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None

_DISABLED = {"0", "false", "no", "off"}

USE_NUMBA = _nb is not None and os.environ.get("DECOCTL_NUMBA", "1").lower() not in _DISABLED


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it untouched."""
    if _nb is None:
        return fn
    return _nb.njit(cache=True, nogil=True)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def dispatch(loop_impl, numpy_impl):
    """Return a callable that routes to the selected backend at call time.

    ``backend=`` may be passed explicitly ("numba" or "numpy") to force a path,
    which the tests and the benchmark use to compare both.
    """

    @functools.wraps(numpy_impl)
    def run(*args, backend=None, **kwargs):
        name = backend or backend_name()
        if name == "numba":
            if _nb is None:
                raise RuntimeError("numba backend requested but numba is not installed")
            return loop_impl(*args, **kwargs)
        if name == "numpy":
            return numpy_impl(*args, **kwargs)
        raise ValueError(f"unknown backend {name!r}")

    run.loop_impl = loop_impl
    run.numpy_impl = numpy_impl
    return run
