"""Periodic tricubic (4-point Lagrange per axis) sampling of grid fields."""
from __future__ import annotations

import numpy as np

from . import kernels
from .grid import Grid3

__all__ = ["interpolate", "InterpolationError"]


class InterpolationError(ValueError):
    pass


def interpolate(grid: Grid3, field: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Sample ``field`` (shape ``(..., N1, N2, N3)``) at ``positions`` (``(n, 3)`` or ``(3,)``).

    Positions may lie anywhere in R^3; the field is extended periodically.
    Returns shape ``(..., n)`` (or ``(...)`` for a single point).  The
    interpolant reproduces cubic polynomials away from the periodic seam and
    has O(h^4) error on smooth fields.
    """
    field = np.asarray(field, dtype=float)
    if field.shape[-3:] != grid.shape:
        raise InterpolationError(f"field shape {field.shape} does not match grid {grid.shape}")
    pos = np.asarray(positions, dtype=float)
    single = pos.ndim == 1
    pos = np.ascontiguousarray(pos.reshape(-1, 3))
    if not np.all(np.isfinite(pos)):
        raise InterpolationError("non-finite interpolation position")
    lead = field.shape[:-3]
    flat = np.ascontiguousarray(field.reshape((-1,) + grid.shape))
    out = np.empty((flat.shape[0], pos.shape[0]))
    kernels.tricubic(flat, np.asarray(grid.origin, float), np.ascontiguousarray(grid.spacing, dtype=float), pos, out)
    out = out.reshape(lead + (pos.shape[0],))
    return out[..., 0] if single else out
