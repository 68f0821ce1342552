"""Initial-data families for the Elsasser system.

Amplitude conventions:

* ``low_frequency`` and ``oscillatory``: ``amplitude`` is ``eps`` with the
  energy normalized to ``E0 = eps**2`` (``E_k = ||grad^k v||^2 + ||grad^k b||^2``),
  so the two families can be compared at matched energy.
* ``bump``, ``random_band``, ``single_mode``: ``amplitude`` is the sup norm
  of each Elsasser field.

All families are divergence-free and restricted to the dealiased band.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid3
from .solver import ElsasserState

__all__ = ["InitialDataSpec", "make_initial_data", "sobolev_energies", "FAMILIES", "DataContractError"]

FAMILIES = ("zero", "low_frequency", "oscillatory", "random_band", "single_mode", "bump", "custom_checkpoint")


class DataContractError(ValueError):
    """Data incompatible with the requested run (e.g. the no-wrap contract)."""


@dataclass(frozen=True)
class InitialDataSpec:
    family: str = "bump"
    amplitude: float = 0.01
    seed: int = 0
    # low_frequency: template support radius in the scaled variable eps*x
    envelope_scale: float = 2.5
    # oscillatory / random_band: |k| window
    band: tuple[float, float] = (0.97, 1.03)
    # single_mode: integer mode index and which side(s) carry it
    mode: tuple[int, int, int] = (0, 0, 1)
    sides: str = "both"
    # bump: Gaussian width and centres of the z+ / z- bumps
    sigma: float = 2.0
    center_plus: tuple[float, float, float] = (0.0, 0.0, 0.0)
    center_minus: tuple[float, float, float] = (0.0, 0.0, 0.0)
    path: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown data family {self.family!r}; expected one of {FAMILIES}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.sides not in ("both", "plus", "minus"):
            raise ValueError("sides must be 'both', 'plus' or 'minus'")
        if not (0 <= self.band[0] < self.band[1]):
            raise ValueError("band must satisfy 0 <= k_lo < k_hi")
        if self.sigma <= 0 or self.envelope_scale <= 0:
            raise ValueError("sigma and envelope_scale must be positive")
        if self.family == "custom_checkpoint" and not self.path:
            raise ValueError("custom_checkpoint needs a path")


def sobolev_energies(state: ElsasserState, kmax: int = 2) -> np.ndarray:
    """``E_k = (||grad^k z+||^2 + ||grad^k z-||^2) / 2`` for ``k = 0..kmax``.

    ``|grad^k f|^2`` sums all ordered derivative tuples, which in Fourier space
    is ``|xi|^(2k) |f_hat|^2``.  Equivalently ``||grad^k v||^2 + ||grad^k b||^2``.
    """
    g = state.grid
    w = g.rfft_weights
    s = g.volume / g.npoints**2
    a = np.abs(state.zp_hat) ** 2 + np.abs(state.zm_hat) ** 2
    a = np.sum(a, axis=0) * w
    return np.array([0.5 * float(np.sum(a * g.k2**k)) * s for k in range(kmax + 1)])


def _bump_envelope(r: np.ndarray) -> np.ndarray:
    """Compact C-infinity bump ``exp(1 - 1/(1-r^2))`` on ``r < 1``."""
    out = np.zeros_like(r)
    inside = r < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def _curl_of_potential(grid: Grid3, potential: np.ndarray) -> np.ndarray:
    """Divergence-free band-limited field ``curl A``."""
    ah = grid.fft(potential) * grid.dealias_mask
    return grid.ifft(grid.curl_hat(ah))


def _sup_normalize(z: np.ndarray, amp: float) -> np.ndarray:
    m = float(np.sqrt(np.max(np.sum(z * z, axis=0))))
    return z * (amp / m) if m > 0 else z


def _low_frequency(grid: Grid3, spec: InitialDataSpec):
    eps = spec.amplitude
    x1, x2, x3 = grid.coords
    y = [eps * x1 / spec.envelope_scale, eps * x2 / spec.envelope_scale, eps * x3 / spec.envelope_scale]
    r = np.sqrt(y[0] ** 2 + y[1] ** 2 + y[2] ** 2)
    phi = np.broadcast_to(_bump_envelope(r), grid.shape)
    rng = np.random.default_rng(spec.seed)
    a1, a2 = rng.standard_normal(3), rng.standard_normal(3)
    v = _curl_of_potential(grid, a1[:, None, None, None] * phi)
    b = _curl_of_potential(grid, a2[:, None, None, None] * phi)
    return v + b, v - b


def _shell(grid: Grid3, spec: InitialDataSpec, rng: np.random.Generator) -> np.ndarray:
    kk = np.sqrt(grid.k2)
    sel = (kk >= spec.band[0]) & (kk <= spec.band[1]) & grid.dealias_mask
    if not np.any(sel):
        raise ValueError(f"no lattice wavenumbers with |k| in {spec.band} on this grid")
    shape = (3,) + grid.spectral_shape
    zh = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * sel
    z = grid.ifft(grid.leray_hat(zh))
    return z


def _oscillatory(grid: Grid3, spec: InitialDataSpec):
    rng = np.random.default_rng(spec.seed)
    return _shell(grid, spec, rng), _shell(grid, spec, rng)


def _random_band(grid: Grid3, spec: InitialDataSpec):
    rng = np.random.default_rng(spec.seed)
    zp = _shell(grid, spec, rng)
    zm = _shell(grid, spec, rng)
    return _sup_normalize(zp, spec.amplitude), _sup_normalize(zm, spec.amplitude)


def _single_mode(grid: Grid3, spec: InitialDataSpec):
    n = np.asarray(spec.mode, dtype=int)
    lim = np.array([d // 3 for d in grid.dims])
    if np.any(np.abs(n) > lim):
        raise ValueError(f"mode {tuple(n)} beyond the dealiasing cutoff {tuple(lim)}")
    if not np.any(n):
        raise ValueError("single_mode needs a nonzero mode index")
    kvec = 2 * np.pi * n / np.asarray(grid.box)
    # polarization perpendicular to k
    trial = np.array([1.0, 0.0, 0.0]) if abs(kvec[0]) < 0.9 * np.linalg.norm(kvec) else np.array([0.0, 1.0, 0.0])
    pol = np.cross(kvec, trial)
    pol /= np.linalg.norm(pol)
    x1, x2, x3 = grid.coords
    o = np.asarray(grid.origin)
    phase = kvec[0] * (x1 - o[0]) + kvec[1] * (x2 - o[1]) + kvec[2] * (x3 - o[2])
    wave = pol[:, None, None, None] * np.cos(phase)[None]
    z = spec.amplitude * wave
    zero = np.zeros_like(z)
    if spec.sides == "plus":
        return z, zero
    if spec.sides == "minus":
        return zero, z
    return z, z.copy()


def _bump(grid: Grid3, spec: InitialDataSpec):
    x1, x2, x3 = grid.coords
    rng = np.random.default_rng(spec.seed)

    def one(center, a):
        c = np.asarray(center, float)
        r2 = (x1 - c[0]) ** 2 + (x2 - c[1]) ** 2 + (x3 - c[2]) ** 2
        psi = np.broadcast_to(np.exp(-r2 / (2 * spec.sigma**2)), grid.shape)
        return _sup_normalize(_curl_of_potential(grid, a[:, None, None, None] * psi), spec.amplitude)

    zp = one(spec.center_plus, rng.standard_normal(3))
    zm = one(spec.center_minus, rng.standard_normal(3))
    if spec.sides == "plus":
        zm = np.zeros_like(zm)
    elif spec.sides == "minus":
        zp = np.zeros_like(zp)
    return zp, zm


def check_run_contract(grid: Grid3, b0: float, t_final: float, sup_amplitude: float, margin: float = 0.4) -> None:
    """No-wrap contract: ``t_final |B0| (1 + sup|z|/|B0|) <= margin L3``."""
    travel = t_final * b0 * (1.0 + sup_amplitude / b0)
    if travel > margin * grid.box[2]:
        raise DataContractError(
            f"run violates the no-wrap contract: T*|B0|*(1+sup|z|/|B0|) = {travel:.4g} > {margin}*L3 = {margin * grid.box[2]:.4g}"
        )


def make_initial_data(spec: InitialDataSpec, grid: Grid3, mu: float = 0.0, b0: float = 1.0,
                      t_final: float | None = None) -> ElsasserState:
    """Build the initial state of ``spec.family`` on ``grid``.

    When ``t_final`` is given the no-wrap contract is checked against the
    generated data.
    """
    fam = spec.family
    if fam == "custom_checkpoint":
        from .io import read_checkpoint

        state = read_checkpoint(spec.path)
        if state.grid.dims != grid.dims or not np.allclose(state.grid.box, grid.box):
            raise ValueError("checkpoint grid does not match the configured grid")
        state = ElsasserState(grid, state.zp_hat, state.zm_hat, t=0.0, mu=mu, b0=b0)
    elif fam == "zero" or spec.amplitude == 0:
        state = ElsasserState.zeros(grid, mu=mu, b0=b0)
    else:
        builder = {
            "low_frequency": _low_frequency,
            "oscillatory": _oscillatory,
            "random_band": _random_band,
            "single_mode": _single_mode,
            "bump": _bump,
        }[fam]
        zp, zm = builder(grid, spec)
        state = ElsasserState.from_physical(grid, zp, zm, mu=mu, b0=b0)
        if fam in ("low_frequency", "oscillatory"):
            e0 = sobolev_energies(state, 0)[0]
            scale = spec.amplitude / np.sqrt(e0)
            state = ElsasserState(grid, state.zp_hat * scale, state.zm_hat * scale, mu=mu, b0=b0)
    if t_final is not None:
        sp, sm = state.max_abs()
        if max(sp, sm) >= 0.5 * b0:
            raise DataContractError(f"sup|z| = {max(sp, sm):.3g} is not small relative to |B0| = {b0}")
        check_run_contract(grid, b0, t_final, max(sp, sm))
    return state
