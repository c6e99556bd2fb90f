"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over.  Setting ``KPFUSION_PURE_PYTHON=1`` forces the
numpy path.  ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

from . import _pykernels

_force_python = os.environ.get("KPFUSION_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

nearest_medoids = _impl.nearest_medoids
best_swap = _impl.best_swap
relaxation_support = _impl.relaxation_support
relaxation_iterate = _impl.relaxation_iterate

__all__ = ["BACKEND", "nearest_medoids", "best_swap", "relaxation_support", "relaxation_iterate"]
