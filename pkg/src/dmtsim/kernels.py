"""Backend selection for the receiver hot loops.

The compiled module is used when it was built and importable; setting
``DMTSIM_PURE_PYTHON=1`` forces the numpy fallback.  ``BACKEND`` names the
active one.
"""

import os

from dmtsim import _kernels_py

if os.environ.get("DMTSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from dmtsim import _kernels_c as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

nearest_label = _impl.nearest_label
dd_equalize = _impl.dd_equalize
sc_metric = _impl.sc_metric

__all__ = ["BACKEND", "nearest_label", "dd_equalize", "sc_metric"]
