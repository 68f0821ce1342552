"""Periodic box, real-to-complex transforms and spectral operators.

Normalization used throughout the package: the forward transform is
unnormalized and the inverse divides by ``N1*N2*N3`` (the scipy/numpy
``"backward"`` convention).  Spectral arrays have shape ``(..., N1, N2, N3//2+1)``.

Vector fields carry their component index first: ``(3, N1, N2, N3)``.
Gradients of vector fields are ``(3, 3, N1, N2, N3)`` with ``g[i, j] = d_j v^i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np

from . import fftback

__all__ = [
    "Grid3",
    "FieldShapeError",
    "gradient",
    "divergence",
    "laplacian",
    "curl",
    "leray_project",
    "wedge",
    "advective_derivative",
    "multi_indices",
]

def set_threads(n: int) -> None:
    """Number of FFT worker threads."""
    fftback.set_threads(n)


class FieldShapeError(ValueError):
    """A field does not match the grid it is used with."""


@dataclass(frozen=True)
class Grid3:
    """Periodic box ``prod [o_i, o_i + L_i)`` with ``N_i`` nodes per axis.

    ``origin`` defaults to ``-L/2`` so the box is centred on the origin,
    which is where the weight functions are anchored.
    """

    dims: tuple[int, int, int]
    box: tuple[float, float, float] = (2 * np.pi, 2 * np.pi, 2 * np.pi)
    origin: tuple[float, float, float] | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        box = tuple(float(b) for b in self.box)
        if len(dims) != 3 or len(box) != 3:
            raise ValueError("dims and box must have three entries")
        for n in dims:
            if n < 8 or n % 2:
                raise ValueError(f"grid dimensions must be even and >= 8, got {dims}")
        for b in box:
            if not b > 0:
                raise ValueError(f"box lengths must be positive, got {box}")
        origin = tuple(-b / 2 for b in box) if self.origin is None else tuple(float(o) for o in self.origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "origin", origin)

    # -- geometry -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.dims[0], self.dims[1], self.dims[2] // 2 + 1)

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array(self.box) / np.array(self.dims)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.dims))

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable node coordinates ``(x1, x2, x3)``."""
        x1, x2, x3 = self.axes
        return x1[:, None, None], x2[None, :, None], x3[None, None, :]

    def mesh(self) -> np.ndarray:
        """Full ``(3, N1, N2, N3)`` array of node coordinates."""
        return np.stack(np.broadcast_arrays(*self.coords)).astype(float)

    # -- spectral index set -------------------------------------------------

    @cached_property
    def index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer mode numbers per axis, Nyquist stored as ``+N/2``."""
        n1, n2, n3 = self.dims
        i1 = np.fft.fftfreq(n1, 1.0 / n1)
        i2 = np.fft.fftfreq(n2, 1.0 / n2)
        i1[n1 // 2] = n1 // 2
        i2[n2 // 2] = n2 // 2
        i3 = np.arange(n3 // 2 + 1, dtype=float)
        return i1[:, None, None], i2[None, :, None], i3[None, None, :]

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers ``2 pi n_i / L_i`` (broadcastable)."""
        return tuple(2 * np.pi * n / L for n, L in zip(self.index, self.box))

    @cached_property
    def k_odd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers for odd derivatives: zero on the Nyquist planes."""
        out = []
        for ax, (kk, n) in enumerate(zip(self.k, self.dims)):
            kk = kk.copy()
            sl = [slice(None)] * 3
            sl[ax] = n // 2
            kk[tuple(sl)] = 0.0
            out.append(kk)
        return tuple(out)

    @cached_property
    def k_odd_1d(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Contiguous 1D copies of ``k_odd`` (for compiled kernels)."""
        return tuple(np.ascontiguousarray(kk.ravel()) for kk in self.k_odd)

    @cached_property
    def k2(self) -> np.ndarray:
        k1, k2, k3 = self.k
        return k1**2 + k2**2 + k3**2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        k2 = self.k2.copy()
        k2[0, 0, 0] = 1.0
        out = 1.0 / k2
        out[0, 0, 0] = 0.0
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep ``|n_i| <= N_i // 3`` on every axis."""
        keep = [np.abs(n) <= d // 3 for n, d in zip(self.index, self.dims)]
        return keep[0] & keep[1] & keep[2]

    @cached_property
    def nyquist_free_mask(self) -> np.ndarray:
        keep = [np.abs(n) < d // 2 for n, d in zip(self.index, self.dims)]
        return keep[0] & keep[1] & keep[2]

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each stored half-spectrum mode in the full spectrum."""
        n3 = self.dims[2]
        w = np.full(self.spectral_shape, 2.0)
        w[:, :, 0] = 1.0
        if n3 % 2 == 0:
            w[:, :, n3 // 2] = 1.0
        return w

    # -- transforms ---------------------------------------------------------

    def check(self, f: np.ndarray, ncomp: int | None = None) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-3:] != self.dims:
            raise FieldShapeError(f"field shape {f.shape} does not match grid {self.dims}")
        if ncomp is not None and f.shape[:-3] != ((ncomp,) if ncomp > 1 else ()):
            raise FieldShapeError(f"expected {ncomp} component(s), got shape {f.shape}")
        return f

    def check_hat(self, fh: np.ndarray) -> np.ndarray:
        if fh.shape[-3:] != self.spectral_shape:
            raise FieldShapeError(f"spectral shape {fh.shape} does not match grid {self.spectral_shape}")
        return fh

    def fft(self, f: np.ndarray) -> np.ndarray:
        f = self.check(f)
        return fftback.rfft3(f)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        fh = self.check_hat(fh)
        return fftback.irfft3(fh, self.dims)

    def project_band(self, fh: np.ndarray) -> np.ndarray:
        return fh * self.dealias_mask

    def integrate(self, f: np.ndarray) -> float:
        """Grid-sum (periodic trapezoidal) quadrature of a scalar density."""
        return float(np.sum(f) * self.cell_volume)

    def norm2(self, f: np.ndarray) -> float:
        """``int |f|^2 dx`` in physical space (all components summed)."""
        return self.integrate(f * f)

    def spectral_norm2(self, fh: np.ndarray) -> float:
        """``int |f|^2 dx`` from spectral coefficients (Parseval)."""
        w = self.rfft_weights
        s = np.sum(w * (fh.real**2 + fh.imag**2))
        return float(s * self.volume / self.npoints**2)

    def spectral_inner(self, ah: np.ndarray, bh: np.ndarray) -> float:
        """``int a . b dx`` from spectral coefficients."""
        s = np.sum(self.rfft_weights * (ah.real * bh.real + ah.imag * bh.imag))
        return float(s * self.volume / self.npoints**2)

    # -- spectral operators (on coefficient arrays) ---------------------------

    def grad_hat(self, fh: np.ndarray) -> np.ndarray:
        """Gradient; a leading component axis of ``fh`` is kept first."""
        k1, k2, k3 = self.k_odd
        return np.stack([1j * k1 * fh, 1j * k2 * fh, 1j * k3 * fh], axis=fh.ndim - 3)

    def div_hat(self, vh: np.ndarray) -> np.ndarray:
        k1, k2, k3 = self.k_odd
        return 1j * (k1 * vh[0] + k2 * vh[1] + k3 * vh[2])

    def curl_hat(self, vh: np.ndarray) -> np.ndarray:
        k1, k2, k3 = self.k_odd
        return 1j * np.stack([
            k2 * vh[2] - k3 * vh[1],
            k3 * vh[0] - k1 * vh[2],
            k1 * vh[1] - k2 * vh[0],
        ])

    def lap_hat(self, fh: np.ndarray) -> np.ndarray:
        return -self.k2 * fh

    def leray_hat(self, vh: np.ndarray) -> np.ndarray:
        """Remove the gradient part ``k (k.v) / |k|^2``; the mean mode is kept."""
        k1, k2, k3 = self.k_odd
        kk = (k1 * vh[0] + k2 * vh[1] + k3 * vh[2]) * self._inv_k2_odd
        return np.stack([vh[0] - k1 * kk, vh[1] - k2 * kk, vh[2] - k3 * kk])

    @cached_property
    def _inv_k2_odd(self) -> np.ndarray:
        k1, k2, k3 = self.k_odd
        q = k1**2 + k2**2 + k3**2
        out = np.zeros_like(q)
        np.divide(1.0, q, out=out, where=q > 0)
        return out

    def deriv_hat(self, fh: np.ndarray, alpha: tuple[int, int, int]) -> np.ndarray:
        """``d^alpha`` for a multi-index ``alpha``."""
        factor = 1.0
        for kk, kodd, a in zip(self.k, self.k_odd, alpha):
            if a:
                factor = factor * (1j * (kodd if a % 2 else kk)) ** a
        return fh * factor


def multi_indices(order: int) -> list[tuple[int, int, int]]:
    """All multi-indices ``alpha`` in three variables with ``|alpha| = order``."""
    out = []
    for combo in combinations_with_replacement(range(3), order):
        out.append(tuple(combo.count(ax) for ax in range(3)))
    return out


# -- physical-space convenience wrappers -------------------------------------------


def gradient(grid: Grid3, f: np.ndarray) -> np.ndarray:
    """Spectral gradient of a scalar (-> vector) or vector (-> ``(3, 3, ...)``)."""
    return grid.ifft(grid.grad_hat(grid.fft(f)))


def divergence(grid: Grid3, v: np.ndarray) -> np.ndarray:
    grid.check(v, 3)
    return grid.ifft(grid.div_hat(grid.fft(v)))


def laplacian(grid: Grid3, f: np.ndarray) -> np.ndarray:
    return grid.ifft(grid.lap_hat(grid.fft(f)))


def curl(grid: Grid3, v: np.ndarray) -> np.ndarray:
    """``curl v = (d2 v3 - d3 v2, d3 v1 - d1 v3, d1 v2 - d2 v1)``."""
    grid.check(v, 3)
    return grid.ifft(grid.curl_hat(grid.fft(v)))


def leray_project(grid: Grid3, v: np.ndarray) -> np.ndarray:
    grid.check(v, 3)
    return grid.ifft(grid.leray_hat(grid.fft(v)))


def _dealiased(grid: Grid3, f: np.ndarray, dealias: bool) -> np.ndarray:
    if not dealias:
        return f
    return grid.ifft(grid.project_band(grid.fft(f)))


def wedge(grid: Grid3, a: np.ndarray, b: np.ndarray, dealias: bool = True) -> np.ndarray:
    """``(grad a ^ grad b)_k = eps_ijk d_i a^l d_l b^j`` with 2/3 truncation."""
    grid.check(a, 3)
    grid.check(b, 3)
    ga = gradient(grid, a)
    gb = gradient(grid, b)
    return _dealiased(grid, wedge_from_gradients(ga, gb), dealias)


def wedge_from_gradients(ga: np.ndarray, gb: np.ndarray) -> np.ndarray:
    """Pointwise wedge product given ``ga[l, i] = d_i a^l`` and ``gb[j, l] = d_l b^j``."""
    # m[j, i] = sum_l d_l b^j d_i a^l
    m = np.einsum("jl...,li...->ji...", gb, ga)
    return np.stack([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def advective_derivative(grid: Grid3, u: np.ndarray, f: np.ndarray, dealias: bool = True) -> np.ndarray:
    """``u . grad f`` for scalar or vector ``f``; the product is 2/3-truncated."""
    grid.check(u, 3)
    grid.check(f)
    g = gradient(grid, f)
    if f.ndim == 3:
        out = u[0] * g[0] + u[1] * g[1] + u[2] * g[2]
    else:
        out = np.einsum("j...,ij...->i...", u, g)
    return _dealiased(grid, out, dealias)
