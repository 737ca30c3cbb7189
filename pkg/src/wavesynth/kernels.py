"""Kernel dispatch: the compiled extension when it imports, numpy otherwise.

Set ``WAVESYNTH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

BACKEND = "python"

if os.environ.get("WAVESYNTH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
else:
    _compiled = None

if _compiled is not None:
    fir_batch = _compiled.fir_batch
    BACKEND = "cython"
else:
    fir_batch = _fallback.fir_batch

__all__ = ["BACKEND", "fir_batch"]
