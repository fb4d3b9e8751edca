"""Backend selection for the hot loops.

The Cython extension is used when it was built; otherwise the numpy
reference in ``_kernels_py`` is used.  Set ``FTDLA_PURE_PYTHON=1`` to force
the fallback (handy for benchmarking and for cross-checking the two).
"""

import os

from . import _kernels_py

if os.environ.get("FTDLA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

window_truncate = _impl.window_truncate
scatter_weight_faults = _impl.scatter_weight_faults
xor_flips = _impl.xor_flips
netlist_eval = _impl.netlist_eval

ACC_MIN = _kernels_py.ACC_MIN
ACC_MAX = _kernels_py.ACC_MAX
