"""Selection between the numba kernels and the pure-numpy fallback.

The backend is read from the ``CTCR_BACKEND`` environment variable
(``numba`` or ``numpy``) and can be overridden at runtime with
``set_backend`` or the ``use_backend`` context manager.
"""

import contextlib
import os

_VALID = ("numba", "numpy")

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_backend = os.environ.get("CTCR_BACKEND", "numba").strip().lower() or "numba"
if _backend not in _VALID:
    raise ValueError(f"CTCR_BACKEND must be one of {_VALID}, got {_backend!r}")


def get_backend():
    """Active backend name; ``numba`` degrades to ``numpy`` if unavailable."""
    if _backend == "numba" and not HAVE_NUMBA:
        return "numpy"
    return _backend


def set_backend(name):
    global _backend
    name = name.strip().lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    _backend = name


@contextlib.contextmanager
def use_backend(name):
    prev = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)
