"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``NANOFLUXONIUM_PURE=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("NANOFLUXONIUM_PURE", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

displacement_moduli = _impl.displacement_moduli
lindblad_rk4 = _impl.lindblad_rk4

__all__ = ["BACKEND", "displacement_moduli", "lindblad_rk4"]
