"""Elsasser-form incompressible MHD around ``B0 = |B0| e3`` on a periodic box.

State variables are the perturbations ``z+ = Z+ - B0`` and ``z- = Z- + B0``::

    dt z+ + Z- . grad z+ - mu lap z+ = -grad p
    dt z- + Z+ . grad z- - mu lap z- = -grad p

Time stepping is classical RK4 in integrating-factor (Lawson) form: the
viscous term is integrated exactly per mode, the Alfven transport by ``B0``
and the projected nonlinearity explicitly.  ``alfven_in_factor=True`` moves
the Alfven term into the exact factor as well.
Extra ODEs (characteristic coordinates, marker flows, line accumulators,
dissipation integrals) can be attached and are advanced with the same
stages, so that everything stays consistent to fourth order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Protocol, Sequence

import numpy as np

from . import fftback, kernels
from .grid import Grid3, wedge_from_gradients
from .interp import interpolate

log = logging.getLogger(__name__)

__all__ = [
    "ElsasserState",
    "SolverConfig",
    "SolverError",
    "CFLViolation",
    "StageFields",
    "solve_pressure",
    "rhs",
    "step",
    "Stepper",
    "OdeComponent",
    "DissipationIntegral",
    "linear_symbols",
    "max_speed",
    "check_cfl",
    "dispersion",
    "linearized_mode_fit",
    "ModeFit",
    "UnresolvableModeError",
    "classify_regime",
]


class SolverError(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, msg: str, step_index: int | None = None):
        super().__init__(msg if step_index is None else f"{msg} (step {step_index})")
        self.step_index = step_index


class CFLViolation(SolverError):
    def __init__(self, dt: float, max_speed: float, cfl: float, cfl_max: float):
        super().__init__(f"CFL {cfl:.3g} > {cfl_max:.3g} at dt={dt:g} (max|Z|={max_speed:.6g})")
        self.max_speed = max_speed
        self.cfl = cfl


@dataclass
class ElsasserState:
    """Perturbation fields stored as 2/3-band spectral coefficients.

    ``zp_hat``/``zm_hat`` have shape ``(3, N1, N2, N3//2+1)``.
    """

    grid: Grid3
    zp_hat: np.ndarray
    zm_hat: np.ndarray
    t: float = 0.0
    mu: float = 0.0
    b0: float = 1.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("viscosity must be >= 0")
        if not self.b0 > 0:
            raise ValueError("|B0| must be positive")
        for zh in (self.zp_hat, self.zm_hat):
            if zh.shape != (3,) + self.grid.spectral_shape:
                raise ValueError(f"spectral state has shape {zh.shape}")

    @classmethod
    def from_physical(cls, grid: Grid3, z_plus, z_minus, t=0.0, mu=0.0, b0=1.0, dealias=True):
        """Build a state from nodal values; projects to the band and to div-free."""
        grid.check(z_plus, 3)
        grid.check(z_minus, 3)
        mask = grid.dealias_mask if dealias else grid.nyquist_free_mask
        zp = grid.leray_hat(grid.fft(np.asarray(z_plus, float)) * mask)
        zm = grid.leray_hat(grid.fft(np.asarray(z_minus, float)) * mask)
        return cls(grid, zp, zm, t=t, mu=mu, b0=b0)

    @classmethod
    def zeros(cls, grid: Grid3, mu=0.0, b0=1.0):
        z = np.zeros((3,) + grid.spectral_shape, complex)
        return cls(grid, z, z.copy(), mu=mu, b0=b0)

    @property
    def z_plus(self) -> np.ndarray:
        return self.grid.ifft(self.zp_hat)

    @property
    def z_minus(self) -> np.ndarray:
        return self.grid.ifft(self.zm_hat)

    def copy(self) -> "ElsasserState":
        return replace(self, zp_hat=self.zp_hat.copy(), zm_hat=self.zm_hat.copy())

    def energies(self) -> tuple[float, float]:
        """Unweighted ``int |z+|^2`` and ``int |z-|^2``."""
        g = self.grid
        return g.spectral_norm2(self.zp_hat), g.spectral_norm2(self.zm_hat)

    def dissipation_rates(self) -> tuple[float, float]:
        """``int |grad z+|^2`` and ``int |grad z-|^2``."""
        g = self.grid
        k2 = g.k2
        w = g.rfft_weights * k2
        s = g.volume / g.npoints**2
        return (float(np.sum(w * np.abs(self.zp_hat) ** 2) * s),
                float(np.sum(w * np.abs(self.zm_hat) ** 2) * s))

    def max_abs(self) -> tuple[float, float]:
        return (float(np.sqrt(np.max(np.sum(self.z_plus**2, axis=0)))),
                float(np.sqrt(np.max(np.sum(self.z_minus**2, axis=0)))))

    def mean(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.grid.npoints
        return self.zp_hat[:, 0, 0, 0].real / n, self.zm_hat[:, 0, 0, 0].real / n


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    scheme: str = "rk4-integrating-factor"
    dealias: bool = True
    cfl_max: float = 1.0
    linear: bool = False
    alfven_in_factor: bool = False
    # mutation hook for the verification suite: flips the sign of the
    # pressure gradient seen by along-line accumulators
    mutate_pressure_sign: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme != "rk4-integrating-factor":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.cfl_max > 0:
            raise ValueError("cfl_max must be positive")


class StageFields:
    """Everything derived from ``(z+, z-)`` at one RK stage, computed lazily.

    Physical arrays are evaluated on grid nodes; quadratic quantities are
    2/3-truncated before use.
    """

    def __init__(self, grid: Grid3, zp_hat, zm_hat, t: float, b0: float,
                 dealias: bool = True, linear: bool = False, pressure_sign: float = 1.0,
                 alfven_explicit: bool = True):
        self.grid = grid
        self.zp_hat = zp_hat
        self.zm_hat = zm_hat
        self.t = t
        self.b0 = b0
        self.linear = linear
        self.pressure_sign = pressure_sign
        self.alfven_explicit = alfven_explicit
        self.dealias = dealias
        self.mask = grid.dealias_mask if dealias else grid.nyquist_free_mask

    @cached_property
    def zp(self) -> np.ndarray:
        return self.grid.ifft(self.zp_hat)

    @cached_property
    def zm(self) -> np.ndarray:
        return self.grid.ifft(self.zm_hat)

    @cached_property
    def products_hat(self) -> np.ndarray:
        """``M[a, b] = FFT(z+^a z-^b)`` (untruncated; the band is applied downstream)."""
        zp, zm = self.zp, self.zm
        buf = fftback.real_buffer((3, 3) + self.grid.shape)
        np.multiply(zp[:, None], zm[None, :], out=buf)
        return self.grid.fft(buf)

    @cached_property
    def _assembled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Explicit spectral rhs for ``z+``, ``z-`` and the pressure ``p``.

        The rhs holds ``-P(z-.grad z+)`` (resp. ``-P(z+.grad z-)``) and, when the
        Alfven term is explicit, ``+-i B0 k3 z``.
        """
        g = self.grid
        dzp = np.zeros((3,) + g.spectral_shape, complex)
        dzm = np.zeros_like(dzp)
        phat = np.zeros(g.spectral_shape, complex)
        b = band_limits(g, self.dealias)
        k1, k2, k3 = g.k_odd_1d
        b0 = self.b0 if self.alfven_explicit else 0.0
        m = np.zeros((3, 3, 1, 1, 1), complex) if self.linear else self.products_hat
        kernels.spectral_nonlinear(m, k1, k2, k3, b[0], b[1], b[2], dzp, dzm, phat,
                                   np.ascontiguousarray(self.zp_hat), np.ascontiguousarray(self.zm_hat),
                                   b0, not self.linear)
        return dzp, dzm, phat

    @property
    def p_hat(self) -> np.ndarray:
        """Zero-mean pressure: ``-lap p = d_i d_j (z-^i z+^j)``."""
        return self._assembled[2]

    @cached_property
    def grad_p(self) -> np.ndarray:
        return self.pressure_sign * self.grid.ifft(self.grid.grad_hat(self.p_hat))

    @cached_property
    def grad_zp(self) -> np.ndarray:
        return self.grid.ifft(self.grid.grad_hat(self.zp_hat))

    @cached_property
    def grad_zm(self) -> np.ndarray:
        return self.grid.ifft(self.grid.grad_hat(self.zm_hat))

    @cached_property
    def curl_zp(self) -> np.ndarray:
        return self.grid.ifft(self.grid.curl_hat(self.zp_hat))

    @cached_property
    def curl_zm(self) -> np.ndarray:
        return self.grid.ifft(self.grid.curl_hat(self.zm_hat))

    def _trunc(self, f):
        return self.grid.ifft(self.grid.fft(f) * self.mask)

    @cached_property
    def wedge_mp(self) -> np.ndarray:
        """``grad z- ^ grad z+`` (source of the ``curl z+`` equation)."""
        return self._trunc(wedge_from_gradients(self.grad_zm, self.grad_zp))

    @cached_property
    def wedge_pm(self) -> np.ndarray:
        """``grad z+ ^ grad z-``."""
        return self._trunc(wedge_from_gradients(self.grad_zp, self.grad_zm))

    _SAMPLEABLE = ("zp", "zm", "grad_zp", "grad_zm", "grad_p", "wedge_mp", "wedge_pm", "curl_zp", "curl_zm")

    def stacked(self, names: tuple[str, ...]) -> np.ndarray:
        """Contiguous ``(nf, N1, N2, N3)`` stack of the named physical fields."""
        key = ("stack",) + tuple(names)
        cache = self.__dict__.setdefault("_stacks", {})
        if key not in cache:
            parts = []
            for n in names:
                if n not in self._SAMPLEABLE:
                    raise KeyError(f"unknown stage field {n!r}")
                a = getattr(self, n)
                parts.append(a.reshape((-1,) + self.grid.shape))
            cache[key] = np.ascontiguousarray(np.concatenate(parts, axis=0))
        return cache[key]

    def sample(self, positions: np.ndarray, names: tuple[str, ...]) -> np.ndarray:
        """Tricubic samples ``(nf, n)`` of the named fields at ``positions``."""
        return interpolate(self.grid, self.stacked(names), positions)

    def velocity(self, side: int) -> np.ndarray:
        """Perturbation part ``z_side`` of the transport field ``Z_side``."""
        return self.zp if side > 0 else self.zm

    def explicit_rhs(self) -> tuple[np.ndarray, np.ndarray]:
        """Spectral time derivative of the explicitly treated terms.

        Always contains the projected ``-(z-.grad z+) - grad p`` (and the
        counterpart); contains ``+-B0 d3 z+-`` when the Alfven term is explicit.
        """
        dzp, dzm, _ = self._assembled
        return dzp, dzm


def band_limits(grid: Grid3, dealias: bool = True) -> tuple[int, int, int]:
    """Largest retained ``|n_i|`` per axis."""
    if dealias:
        return tuple(n // 3 for n in grid.dims)
    return tuple(n // 2 - 1 for n in grid.dims)


def _stage(state: ElsasserState, zp_hat, zm_hat, t, config: SolverConfig | None) -> StageFields:
    dealias = True if config is None else config.dealias
    linear = False if config is None else config.linear
    sign = -1.0 if (config is not None and config.mutate_pressure_sign) else 1.0
    explicit = True if config is None else not config.alfven_in_factor
    return StageFields(state.grid, zp_hat, zm_hat, t, state.b0, dealias=dealias, linear=linear,
                       pressure_sign=sign, alfven_explicit=explicit)


def solve_pressure(grid: Grid3, z_plus: np.ndarray, z_minus: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Zero-mean ``p`` with ``-lap p = d_i(z+^j d_j z-^i)`` for nodal fields."""
    grid.check(z_plus, 3)
    grid.check(z_minus, 3)
    mask = grid.dealias_mask if dealias else grid.nyquist_free_mask
    f = StageFields(grid, grid.fft(z_plus) * mask, grid.fft(z_minus) * mask, 0.0, 1.0, dealias=dealias)
    return grid.ifft(f.p_hat)


def rhs(state: ElsasserState, config: SolverConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Nodal ``(d z+/dt, d z-/dt)`` including the viscous term."""
    _check_finite(state)
    f = _stage(state, state.zp_hat, state.zm_hat, state.t, config)
    dzp, dzm = f.explicit_rhs()
    lp, lm = linear_symbols(state.grid, state.mu, state.b0, alfven=not f.alfven_explicit)
    return state.grid.ifft(dzp + lp * state.zp_hat), state.grid.ifft(dzm + lm * state.zm_hat)


def linear_symbols(grid: Grid3, mu: float, b0: float, alfven: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Fourier symbols of the linear parts, ``-mu|k|^2 +- i b0 k3``.

    With ``alfven=False`` only the viscous symbol is returned (for both sides).
    """
    visc = -mu * grid.k2
    if not alfven:
        return visc, visc
    ik3 = 1j * b0 * grid.k_odd[2]
    return visc + ik3, visc - ik3


def _check_finite(state: ElsasserState, step_index: int | None = None):
    if not (np.all(np.isfinite(state.zp_hat)) and np.all(np.isfinite(state.zm_hat))):
        raise SolverError("non-finite values in state", step_index)


def max_speed(state: ElsasserState, fields: StageFields | None = None) -> float:
    """``max |Z+-|`` over nodes."""
    if fields is None:
        zp, zm = state.z_plus, state.z_minus
    else:
        zp, zm = fields.zp, fields.zm
    b0 = state.b0
    sp = np.max(zp[0] ** 2 + zp[1] ** 2 + (zp[2] + b0) ** 2)
    sm = np.max(zm[0] ** 2 + zm[1] ** 2 + (zm[2] - b0) ** 2)
    return float(np.sqrt(max(sp, sm)))


def check_cfl(state: ElsasserState, config: SolverConfig, fields: StageFields | None = None) -> float:
    speed = max_speed(state, fields)
    cfl = config.dt * speed / float(np.min(state.grid.spacing))
    if cfl > config.cfl_max:
        raise CFLViolation(config.dt, speed, cfl, config.cfl_max)
    return cfl


class OdeComponent(Protocol):
    """An extra ODE advanced alongside the fields.

    ``value`` is a tuple of arrays; ``derivative`` receives the stage fields
    and the stage values of every attached component (keyed by ``name``).
    """

    name: str
    value: tuple

    def derivative(self, fields: StageFields, values: dict) -> tuple: ...


def _axpy(y: tuple, a: float, dy: tuple) -> tuple:
    return tuple(yi + a * di for yi, di in zip(y, dy))


class Stepper:
    """Advances a state plus attached ODE components with IF-RK4.

    Each step evaluates the stage fields four times; attached components
    see exactly those stages.
    """

    def __init__(self, state: ElsasserState, config: SolverConfig,
                 components: Sequence[OdeComponent] = (), check_every: int = 1):
        self.state = state
        self.config = config
        self.components = list(components)
        self.check_every = check_every
        self.nsteps = 0
        self.last_fields: StageFields | None = None
        self._decay_cache: dict = {}

    def _propagator(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        s = self.state
        alfven = self.config.alfven_in_factor
        key = (h, s.mu, s.b0, alfven)
        if key not in self._decay_cache:
            lp, lm = linear_symbols(s.grid, s.mu, s.b0, alfven=alfven)
            shape = s.grid.spectral_shape
            ep = np.array(np.broadcast_to(np.exp(lp * h), shape), dtype=complex, order="C").ravel()
            em = np.array(np.broadcast_to(np.exp(lm * h), shape), dtype=complex, order="C").ravel()
            self._decay_cache[key] = (ep, em)
        return self._decay_cache[key]

    def fields(self) -> StageFields:
        s = self.state
        return _stage(s, s.zp_hat, s.zm_hat, s.t, self.config)

    def step(self) -> ElsasserState:
        s = self.state
        cfg = self.config
        h = cfg.dt
        checking = bool(self.check_every) and self.nsteps % self.check_every == 0
        if checking:
            _check_finite(s, self.nsteps)
        (hp, hm) = self._propagator(h / 2)
        (fp, fm) = self._propagator(h)
        up, um = s.zp_hat, s.zm_hat
        ys = {c.name: c.value for c in self.components}
        shape = up.shape

        def combo(mode, e1, u, k, c, e2=None):
            out = np.empty(shape, complex)
            kernels.lawson_stage(u.reshape(3, -1), k.reshape(3, -1), e1, e1 if e2 is None else e2,
                                 c, mode, out.reshape(3, -1))
            return out

        def evaluate(zp, zm, t, vals):
            f = _stage(s, zp, zm, t, cfg)
            dz = f.explicit_rhs()
            dy = {c.name: c.derivative(f, vals) for c in self.components}
            return f, dz, dy

        f1 = _stage(s, up, um, s.t, cfg)
        if checking:
            check_cfl(s, cfg, f1)
        kp1, km1 = f1.explicit_rhs()
        d1 = {c.name: c.derivative(f1, ys) for c in self.components}
        self.last_fields = f1
        ap = combo(0, hp, up, kp1, 0.5 * h)
        am = combo(0, hm, um, km1, 0.5 * h)
        y2 = {n: _axpy(ys[n], 0.5 * h, d1[n]) for n in ys}
        _, (kp2, km2), d2 = evaluate(ap, am, s.t + 0.5 * h, y2)
        bp = combo(1, hp, up, kp2, 0.5 * h)
        bm = combo(1, hm, um, km2, 0.5 * h)
        y3 = {n: _axpy(ys[n], 0.5 * h, d2[n]) for n in ys}
        _, (kp3, km3), d3 = evaluate(bp, bm, s.t + 0.5 * h, y3)
        cp = combo(2, fp, up, kp3, h, hp)
        cm = combo(2, fm, um, km3, h, hm)
        y4 = {n: _axpy(ys[n], h, d3[n]) for n in ys}
        _, (kp4, km4), d4 = evaluate(cp, cm, s.t + h, y4)

        new_p = np.empty(shape, complex)
        new_m = np.empty(shape, complex)
        kernels.lawson_final(up.reshape(3, -1), kp1.reshape(3, -1), kp2.reshape(3, -1), kp3.reshape(3, -1),
                             kp4.reshape(3, -1), fp, hp, h, new_p.reshape(3, -1))
        kernels.lawson_final(um.reshape(3, -1), km1.reshape(3, -1), km2.reshape(3, -1), km3.reshape(3, -1),
                             km4.reshape(3, -1), fm, hm, h, new_m.reshape(3, -1))
        g = s.grid
        new_p = g.leray_hat(new_p)
        new_m = g.leray_hat(new_m)
        for c in self.components:
            n = c.name
            c.value = tuple(
                y + (h / 6) * (a + 2 * b + 2 * cc + d)
                for y, a, b, cc, d in zip(ys[n], d1[n], d2[n], d3[n], d4[n])
            )
        self.state = replace(s, zp_hat=new_p, zm_hat=new_m, t=s.t + h)
        self.nsteps += 1
        if not (np.all(np.isfinite(new_p)) and np.all(np.isfinite(new_m))):
            raise SolverError("non-finite values after step", self.nsteps)
        return self.state

    def run(self, t_final: float, callback: Callable[["Stepper"], None] | None = None) -> ElsasserState:
        nsteps = int(round((t_final - self.state.t) / self.config.dt))
        for _ in range(nsteps):
            self.step()
            if callback is not None:
                callback(self)
        return self.state


def step(state: ElsasserState, config: SolverConfig) -> ElsasserState:
    """One IF-RK4 step; returns a new state."""
    return Stepper(state, config).step()


class DissipationIntegral:
    """Running ``2 mu int_0^t int |grad z+-|^2`` advanced with the RK stages.

    Integrating this alongside the fields keeps the energy identity
    residual at the integrator's order instead of a separate quadrature's.
    """

    name = "dissipation"

    def __init__(self, mu: float):
        self.mu = mu
        self.value = (np.zeros(2),)

    def derivative(self, fields: StageFields, values: dict) -> tuple:
        g = fields.grid
        w = g.rfft_weights * g.k2
        s = g.volume / g.npoints**2
        dp = np.sum(w * (fields.zp_hat.real**2 + fields.zp_hat.imag**2)) * s
        dm = np.sum(w * (fields.zm_hat.real**2 + fields.zm_hat.imag**2)) * s
        return (2 * self.mu * np.array([dp, dm]),)

    @property
    def total(self) -> np.ndarray:
        return self.value[0]


# -- linear theory ------------------------------------------------------------


class UnresolvableModeError(ValueError):
    """Wavevector not on the lattice of the box or outside the dealiased band."""


def dispersion(xi, mu: float, b0: float) -> tuple[complex, complex]:
    """Plane-wave frequencies ``f = -i mu |xi|^2 +- b0 xi_3`` (``+`` first).

    The convention is ``exp(i(xi . x - f t))``, so ``-Im f`` is the damping
    rate and ``Re f`` the oscillation frequency.
    """
    xi = np.asarray(xi, float)
    damp = -1j * mu * float(xi @ xi)
    return damp + b0 * xi[2], damp - b0 * xi[2]


def classify_regime(xi, mu: float, b0: float) -> int:
    """Regime of a mode: 1 ideal, 2 weakly damped wave, 3 diffusion dominated.

    Cases 2 and 3 are separated by comparing ``mu |xi|^2`` with ``b0 |xi_3|``.
    """
    xi = np.asarray(xi, float)
    if mu == 0:
        return 1
    return 2 if mu * float(xi @ xi) < b0 * abs(xi[2]) else 3


@dataclass(frozen=True)
class ModeFit:
    xi: tuple
    frequencies: tuple[complex, complex]  # fitted, ordered as in dispersion()
    expected: tuple[complex, complex]
    rel_error: float

    @property
    def frequency(self) -> float:
        """Fitted oscillation frequency (non-negative)."""
        return abs(self.frequencies[0].real)

    @property
    def damping(self) -> float:
        """Fitted damping rate ``mu |xi|^2`` (mean of both branches)."""
        return -0.5 * (self.frequencies[0].imag + self.frequencies[1].imag)


def _mode_grid(xi: np.ndarray, box: float) -> tuple[Grid3, tuple[int, int, int]]:
    n = xi * box / (2 * np.pi)
    ni = np.rint(n)
    if np.any(np.abs(n - ni) > 1e-9):
        raise UnresolvableModeError(f"xi={tuple(xi)} is not a lattice wavevector of the box L={box:g}")
    need = int(np.max(np.abs(ni)))
    N = max(8, 2 * ((3 * need + 2) // 2 + 1))
    return Grid3((N, N, N), (box, box, box)), tuple(int(v) for v in ni)


def linearized_mode_fit(xi, mu: float, b0: float, T: float = 1.0, dt: float | None = None,
                        grid: Grid3 | None = None, samples: int = 41) -> ModeFit:
    """Evolve a single Fourier mode of the linearized system and fit ``f``.

    Both Elsasser fields carry the mode, so the two branches ``+- b0 xi3``
    are fitted from ``z-`` and ``z+`` respectively.  ``rel_error`` is
    relative to ``max |f|``, or absolute for a static mode.  The fit is a least
    squares line through ``log`` of the complex amplitude (unwrapped phase).
    """
    xi = np.asarray(xi, float)
    if grid is None:
        grid, n = _mode_grid(xi, 2 * np.pi)
    else:
        n_f = xi * np.asarray(grid.box) / (2 * np.pi)
        ni = np.rint(n_f)
        if np.any(np.abs(n_f - ni) > 1e-9):
            raise UnresolvableModeError(f"xi={tuple(xi)} is not on the lattice of {grid}")
        n = tuple(int(v) for v in ni)
    if not np.any(n):
        raise UnresolvableModeError("xi = 0 carries no wave")
    if any(abs(v) > d // 3 for v, d in zip(n, grid.dims)):
        raise UnresolvableModeError(f"xi={tuple(xi)} lies beyond the dealiasing cutoff of {grid.dims}")
    # store the representative with n3 >= 0; track the conjugation
    sgn = 1
    if n[2] < 0 or (n[2] == 0 and (n[1] < 0 or (n[1] == 0 and n[0] < 0))):
        sgn = -1
    m = tuple(sgn * v for v in n)
    idx = (m[0] % grid.dims[0], m[1] % grid.dims[1], m[2])
    e = np.array([1.0, 0.0, 0.0]) if abs(xi[0]) < 0.9 * np.linalg.norm(xi) else np.array([0.0, 1.0, 0.0])
    pol = np.cross(xi, e)
    pol /= np.linalg.norm(pol)
    zp = np.zeros((3,) + grid.spectral_shape, complex)
    zp[(slice(None),) + idx] = pol * grid.npoints * 1e-3
    state = ElsasserState(grid, zp, zp.copy(), mu=mu, b0=b0)
    if dt is None:
        speed = b0 * abs(xi[2]) + 1e-300
        dt = min(0.01, 0.05 / speed) if xi[2] else 0.01
    nsteps = max(1, int(round(T / dt)))
    dt = T / nsteps
    every = max(1, nsteps // (samples - 1))
    stepper = Stepper(state, SolverConfig(dt=dt, linear=True))
    comp = int(np.argmax(np.abs(pol)))
    ts = [0.0]
    cp = [state.zp_hat[(comp,) + idx]]
    cm = [state.zm_hat[(comp,) + idx]]
    for i in range(1, nsteps + 1):
        stepper.step()
        if i % every == 0 or i == nsteps:
            ts.append(stepper.state.t)
            cp.append(stepper.state.zp_hat[(comp,) + idx])
            cm.append(stepper.state.zm_hat[(comp,) + idx])
    ts = np.asarray(ts)

    def fit(c):
        c = np.asarray(c)
        if sgn < 0:
            c = np.conj(c)
        logmag = np.log(np.abs(c))
        phase = np.unwrap(np.angle(c))
        A = np.stack([np.ones_like(ts), ts], axis=1)
        (_, slope_m), *_ = np.linalg.lstsq(A, logmag, rcond=None)
        (_, slope_p), *_ = np.linalg.lstsq(A, phase, rcond=None)
        # c ~ exp(-i f t): d log|c|/dt = Im f, d arg c/dt = -Re f
        return complex(-slope_p, slope_m)

    f_minus_branch = fit(cp)  # z+ carries exp(+i b0 xi3 t): f = -b0 xi3 - i mu |xi|^2
    f_plus_branch = fit(cm)
    fitted = (f_plus_branch, f_minus_branch)
    expected = dispersion(xi, mu, b0)
    scale = max(abs(expected[0]), abs(expected[1]))
    err = max(abs(a - b) for a, b in zip(fitted, expected))
    if scale > 0:  # a static mode (f = 0) is compared in absolute terms
        err /= scale
    return ModeFit(tuple(float(v) for v in xi), fitted, expected, float(err))
