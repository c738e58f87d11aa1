"""Select the compiled kernels when available, else the numpy fallback."""
import os

from . import _kernels_py

kernels = _kernels_py
NAME = "python"

if os.environ.get("REGFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        NAME = "cython"


def available():
    """Mapping of backend name to kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["cython"] = _compiled
    return out
