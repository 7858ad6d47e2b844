"""Kernel backend selection.

The compiled extension is used when importable.  Setting the environment
variable ``BCP_PURE_PYTHON=1`` before import forces the pure-Python kernels.
"""
import os

from . import _kernels_py

if os.environ.get("BCP_PURE_PYTHON", "") == "1":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = kernels.BACKEND


def available_backends():
    """Return the importable kernel modules keyed by backend name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        found["cython"] = _kernels
    return found
