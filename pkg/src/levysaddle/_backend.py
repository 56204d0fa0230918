"""Selects the compiled kernels when available, the NumPy ones otherwise.

Set ``LEVYSADDLE_PURE=1`` to force the pure-Python path.
"""
from __future__ import annotations

import os

from . import _core_py

COMPILED = False
if os.environ.get("LEVYSADDLE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        try:
            import numpy as _np
            import pyximport

            pyximport.install(setup_args={"include_dirs": _np.get_include()}, language_level=3, inplace=False)
            from . import _core as _impl  # type: ignore[attr-defined,no-redef]

            COMPILED = True
        except Exception:
            _impl = _core_py
else:
    _impl = _core_py

BACKEND = "compiled" if COMPILED else "numpy"

# NumPy's vectorised exp and log beat the scalar compiled loop for the moment
# sums (see benchmarks/bench_core.py), so only the trigonometric sums switch
log_terms = _core_py.log_terms
log_moment = _core_py.log_moment
contour_sums = _impl.contour_sums
cos_sums = _impl.cos_sums
log_phi0 = _core_py.log_phi0
