"""Select the compiled kernel module, falling back to numpy.

Set ACOUSTIC_LAB_PURE=1 to force the pure-Python path.
"""
import os

from . import _kernels_py

kernels = _kernels_py
BACKEND = "python"

if os.environ.get("ACOUSTIC_LAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"
