"""FFT backend: FFTW through pyFFTW when available, ``scipy.fft`` otherwise.

Plans are built with ``FFTW_ESTIMATE`` so the chosen algorithm (and hence
every rounding) is the same in every process, which keeps runs
bit-reproducible.  Both backends use the unnormalized-forward convention.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

try:  # pragma: no cover - depends on the environment
    import pyfftw

    HAVE_FFTW = True
except ImportError:  # pragma: no cover
    pyfftw = None
    HAVE_FFTW = False

__all__ = ["rfft3", "irfft3", "set_threads", "get_threads", "backend_name", "HAVE_FFTW"]

_state = {"threads": 1, "backend": "fftw" if HAVE_FFTW else "scipy"}
_plans: dict = {}


def set_threads(n: int) -> None:
    _state["threads"] = max(1, int(n))
    _plans.clear()


def get_threads() -> int:
    return _state["threads"]


def set_backend(name: str) -> None:
    if name not in ("fftw", "scipy"):
        raise ValueError(f"unknown FFT backend {name!r}")
    if name == "fftw" and not HAVE_FFTW:
        raise RuntimeError("pyFFTW is not installed")
    _state["backend"] = name


def backend_name() -> str:
    return _state["backend"]


def _plan(kind: str, real_shape: tuple[int, ...]):
    key = (kind, real_shape, _state["threads"])
    plan = _plans.get(key)
    if plan is None:
        spec_shape = real_shape[:-1] + (real_shape[-1] // 2 + 1,)
        a = pyfftw.empty_aligned(real_shape, dtype="float64")
        b = pyfftw.empty_aligned(spec_shape, dtype="complex128")
        axes = (-3, -2, -1)
        flags = ("FFTW_ESTIMATE",) if kind == "r2c" else ("FFTW_ESTIMATE", "FFTW_DESTROY_INPUT")
        if kind == "r2c":
            plan = pyfftw.FFTW(a, b, axes=axes, direction="FFTW_FORWARD", flags=flags, threads=_state["threads"])
        else:
            plan = pyfftw.FFTW(b, a, axes=axes, direction="FFTW_BACKWARD", flags=flags, threads=_state["threads"])
        _plans[key] = plan
    return plan


def real_buffer(shape: tuple[int, ...]) -> np.ndarray:
    """Scratch array that ``rfft3`` can transform without an extra copy.

    The buffer is reused by the next transform of the same shape.
    """
    if _state["backend"] == "scipy":
        return np.empty(shape)
    return _plan("r2c", tuple(shape)).input_array


def rfft3(f: np.ndarray) -> np.ndarray:
    """Forward real transform over the last three axes (unnormalized)."""
    if _state["backend"] == "scipy":
        return sfft.rfftn(f, axes=(-3, -2, -1), workers=_state["threads"])
    plan = _plan("r2c", f.shape)
    if f is not plan.input_array:
        plan.input_array[...] = f
    out = pyfftw.empty_aligned(plan.output_array.shape, dtype="complex128")
    plan.update_arrays(plan.input_array, out)
    plan.execute()
    return out


def irfft3(fh: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse transform over the last three axes, divided by ``N1*N2*N3``."""
    if _state["backend"] == "scipy":
        return sfft.irfftn(fh, s=dims, axes=(-3, -2, -1), workers=_state["threads"])
    real_shape = fh.shape[:-3] + tuple(dims)
    plan = _plan("c2r", real_shape)
    plan.input_array[...] = fh
    out = pyfftw.empty_aligned(real_shape, dtype="float64")
    plan.update_arrays(plan.input_array, out)
    plan.execute()
    out *= 1.0 / (dims[0] * dims[1] * dims[2])
    return out
