"""Kernel backend selection.

The compiled extension (``orthoaudit._core``) is preferred when present;
otherwise the NumPy fallback (``orthoaudit._core_py``) is used.  Set
``ORTHOAUDIT_BACKEND=python`` or ``=cython`` to force a choice ("cython"
raises if the extension is missing).
"""

import os

from . import _core_py

_active = None


def _select(name):
    if name == "python":
        return _core_py
    try:
        from . import _core
    except ImportError:
        if name == "cython":
            raise ImportError(
                "ORTHOAUDIT_BACKEND=cython but the compiled extension is not "
                "built; run `python setup.py build_ext --inplace` or reinstall"
            )
        return _core_py
    return _core


def get():
    """Return the active kernel module."""
    global _active
    if _active is None:
        _active = _select(os.environ.get("ORTHOAUDIT_BACKEND", "auto"))
    return _active


def use(name):
    """Force a backend by name ("python", "cython", "auto").

    Returns the previously active module; intended for tests and
    benchmarks.
    """
    global _active
    previous = _active
    _active = _select(name)
    return previous


def backend_name():
    return get().NAME
