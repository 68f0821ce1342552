"""Kernel backend selection.

The compiled extension ``_kernels`` is used when it was built; otherwise the
numpy versions in ``_kernels_py`` are used.  ``ALFVEN_KERNELS=python`` forces
the fallback.
"""
from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

if os.environ.get("ALFVEN_KERNELS", "").lower() == "python":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on build
        from . import _kernels_py as _impl

        BACKEND = "python"
        log.info("compiled kernels unavailable, using numpy fallback")

spectral_nonlinear = _impl.spectral_nonlinear
lawson_stage = _impl.lawson_stage
lawson_final = _impl.lawson_final
tricubic = _impl.tricubic
column_roots = _impl.column_roots

__all__ = ["BACKEND", "spectral_nonlinear", "lawson_stage", "lawson_final", "tricubic", "column_roots"]
