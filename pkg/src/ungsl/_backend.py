"""Kernel backend selection.

The compiled extension is preferred; set ``UNGSL_PURE_PYTHON=1`` to force
the numpy/scipy fallback.
"""
import os

from . import _pykernels

if os.environ.get("UNGSL_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    NAME = "python"
else:
    try:
        from . import _ckernels as kernels
        NAME = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels
        NAME = "python"


def use(name):
    """Switch the active backend at runtime ("cython" or "python")."""
    global kernels, NAME
    if name == "python":
        kernels, NAME = _pykernels, "python"
    elif name == "cython":
        from . import _ckernels

        kernels, NAME = _ckernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")
