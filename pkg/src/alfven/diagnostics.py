"""Weighted energies, diffusions and characteristic fluxes; energy identity; div-curl check.

Pairing convention: quantities of ``z+`` carry the weight built from the
``-`` coordinates (``<w->`` or ``<u->``) and vice versa, because ``z+`` is
transported along ``L-``, which annihilates those coordinates.  Fluxes of
``z+`` are taken through the level sets of ``u+``.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from . import kernels
from .geometry import CharacteristicFrame, WeightMode, coordinates_at, _side
from .grid import Grid3, multi_indices
from .initial_data import sobolev_energies
from .interp import interpolate
from .solver import ElsasserState

__all__ = [
    "DiagnosticsSeries",
    "DiagnosticsRecorder",
    "FluxAccumulator",
    "FluxError",
    "energy",
    "derivative_density",
    "squared_derivatives",
    "dissipation_density",
    "accumulate_diffusion",
    "energy_identity_residual",
    "div_curl_check",
    "DivCurlResult",
    "total_energy",
    "write_diagnostics_csv",
    "write_flux_csv",
    "sobolev_energies",
]


class FluxError(RuntimeError):
    """Graph extraction failed (a column was not monotone in x3)."""


@lru_cache(maxsize=None)
def _derivative_weights(order: int, extra: int) -> tuple[tuple[tuple[int, int, int], int], ...]:
    """Coefficients ``c_g`` with ``sum_{|a|=order} |grad^extra d^a f|^2 = sum_g c_g |d^g f|^2``.

    ``grad^extra`` runs over ordered index tuples; ``a`` over multi-indices.
    """
    cnt: Counter = Counter()
    for a in multi_indices(order):
        for tup in product(range(3), repeat=extra):
            g = list(a)
            for i in tup:
                g[i] += 1
            cnt[tuple(g)] += 1
    return tuple(sorted(cnt.items()))


def squared_derivatives(grid: Grid3, z_hat: np.ndarray, orders) -> dict:
    """``{g: |d^g z|^2}`` (nodal, summed over components) for all ``|g|`` in ``orders``."""
    out = {}
    for n in orders:
        for g in multi_indices(n):
            d = grid.ifft(grid.deriv_hat(z_hat, g))
            out[g] = np.sum(d * d, axis=0)
    return out


def _combine(sq: dict, order: int, extra: int, shape) -> np.ndarray:
    out = np.zeros(shape)
    for g, c in _derivative_weights(order, extra):
        out += c * sq[g]
    return out


def derivative_density(grid: Grid3, z_hat: np.ndarray, order: int, extra: int = 1) -> np.ndarray:
    """Nodal ``sum_{|a|=order} |grad^extra z^(a)|^2`` (summed over components)."""
    sq = squared_derivatives(grid, z_hat, [order + extra])
    return _combine(sq, order, extra, grid.shape)


def _state_hat(state: ElsasserState, side: int) -> np.ndarray:
    return state.zp_hat if side > 0 else state.zm_hat


def _density_weight(frame: CharacteristicFrame, mode: WeightMode, side: int, lowest: bool,
                    coords: np.ndarray | None = None) -> np.ndarray:
    """Weight multiplying the density of ``z_side``; built from the opposite coordinates."""
    c = frame.coordinates(-side) if coords is None else coords
    w = mode.from_coordinates(c)
    if mode.variant == "hybrid_log":
        lw4 = np.log(w) ** 4
        return lw4 if lowest else w * w * lw4
    return w * w


def energy(state: ElsasserState, frame: CharacteristicFrame, side, k: int | None, mode: WeightMode,
           K: int = 2) -> float:
    """Weighted energy of ``z_side``.

    ``k=None`` gives the lowest-order energy (``int (log<w>)^4 |z|^2`` or
    ``int <u>^(2 omega) |z|^2``); an integer ``k`` gives the order-``k`` energy
    ``int <w>^2 (log<w>)^4 sum_{|a|=k} |grad z^(a)|^2`` (resp. ``<u>^(2 omega)``).
    ``k`` may not exceed ``K + 1``.
    """
    s = _side(side)
    if k is not None and not (0 <= k <= K + 1):
        raise ValueError(f"order {k} exceeds the derivative budget K+1 = {K + 1}")
    g = state.grid
    zh = _state_hat(state, s)
    if k is None:
        z = g.ifft(zh)
        dens = np.sum(z * z, axis=0)
    else:
        dens = derivative_density(g, zh, k, 1)
    return g.integrate(_density_weight(frame, mode, s, k is None) * dens)


def dissipation_density(state: ElsasserState, frame: CharacteristicFrame, side, k: int | None,
                        mode: WeightMode) -> float:
    """``int weight |grad z|^2`` (lowest order) or ``int weight sum |grad^2 z^(a)|^2``."""
    s = _side(side)
    g = state.grid
    zh = _state_hat(state, s)
    dens = derivative_density(g, zh, 0, 1) if k is None else derivative_density(g, zh, k, 2)
    return g.integrate(_density_weight(frame, mode, s, k is None) * dens)


def total_energy(e_low: dict, e_k: dict, mu: float, K: int) -> float:
    """``sum_+- (E + sum_{k<=K} E^k + mu E^{K+1})``."""
    tot = 0.0
    for s in (1, -1):
        tot += e_low[s] + sum(e_k[s][k] for k in range(K + 1)) + mu * e_k[s][K + 1]
    return tot


@dataclass
class DiagnosticsSeries:
    """Time series of energies, diffusions and the unweighted energy balance."""

    K: int = 2
    mu: float = 0.0
    mode: WeightMode = field(default_factory=WeightMode)
    step: list = field(default_factory=list)
    t: list = field(default_factory=list)
    E_plus: list = field(default_factory=list)
    E_minus: list = field(default_factory=list)
    E_plus_k: list = field(default_factory=list)
    E_minus_k: list = field(default_factory=list)
    D_plus: list = field(default_factory=list)
    D_minus: list = field(default_factory=list)
    D_plus_k: list = field(default_factory=list)
    D_minus_k: list = field(default_factory=list)
    sobolev: list = field(default_factory=list)
    Etotal_mu: list = field(default_factory=list)
    L2_plus: list = field(default_factory=list)
    L2_minus: list = field(default_factory=list)
    Q_plus: list = field(default_factory=list)
    Q_minus: list = field(default_factory=list)
    _last_rates: dict | None = None
    _last_grad2: tuple | None = None

    def __len__(self) -> int:
        return len(self.t)

    def identity_residuals(self) -> np.ndarray:
        """``|int|z_s|^2 + Q_s - int|z_s(0)|^2| / int|z_s(0)|^2`` per record (max over sides)."""
        if not self.t:
            raise ValueError("empty diagnostics series")
        out = np.zeros(len(self.t))
        for L2, Q in ((self.L2_plus, self.Q_plus), (self.L2_minus, self.Q_minus)):
            ref = L2[0]
            if ref <= 0:
                continue
            r = np.abs(np.asarray(L2) + np.asarray(Q) - ref) / ref
            out = np.maximum(out, r)
        return out


def accumulate_diffusion(series: DiagnosticsSeries, rates: dict, dt: float) -> None:
    """Trapezoidal update of ``D`` from the current ``mu``-free rates.

    ``rates = {"low": {+1: r, -1: r}, "k": {+1: [..], -1: [..]}}``.  The
    first call only stores the rates (``D = 0`` at the initial record).
    """
    mu = series.mu
    if series._last_rates is None:
        series.D_plus.append(0.0)
        series.D_minus.append(0.0)
        series.D_plus_k.append([0.0] * (series.K + 1))
        series.D_minus_k.append([0.0] * (series.K + 1))
    else:
        last = series._last_rates
        for s, D, Dk in ((1, series.D_plus, series.D_plus_k), (-1, series.D_minus, series.D_minus_k)):
            D.append(D[-1] + mu * dt * 0.5 * (last["low"][s] + rates["low"][s]))
            Dk.append([Dk[-1][k] + mu * dt * 0.5 * (last["k"][s][k] + rates["k"][s][k]) for k in range(series.K + 1)])
    series._last_rates = rates


class DiagnosticsRecorder:
    """Fills a :class:`DiagnosticsSeries` from (state, frame) snapshots.

    ``dissipation`` may be a callable returning the running unweighted
    ``2 mu int_0^t int |grad z_+-|^2`` pair (e.g. the integrator-consistent
    :class:`~alfven.solver.DissipationIntegral`); otherwise it is accumulated
    by the trapezoidal rule between records.
    """

    def __init__(self, mode: WeightMode, K: int = 2, mu: float = 0.0, dissipation=None, weighted: bool = True):
        if K < 0:
            raise ValueError("K must be >= 0")
        self.series = DiagnosticsSeries(K=K, mu=mu, mode=mode)
        self.dissipation = dissipation
        self.weighted = weighted
        self._q = np.zeros(2)
        self._last_unweighted = None

    def record(self, step: int, state: ElsasserState, frame: CharacteristicFrame | None) -> None:
        S = self.series
        K, mode, mu = S.K, S.mode, S.mu
        g = state.grid
        t = state.t
        dt = t - S.t[-1] if S.t else 0.0
        e_low, e_k, rates = {}, {}, {"low": {}, "k": {}}
        grad_rates = {}
        for s in (1, -1):
            zh = _state_hat(state, s)
            z = g.ifft(zh)
            dens0 = np.sum(z * z, axis=0)
            top = K + 2 if (self.weighted and frame is not None) else 1
            sq = squared_derivatives(g, zh, range(1, top + 1))
            grad1 = _combine(sq, 0, 1, g.shape)
            grad_rates[s] = g.integrate(grad1)
            if self.weighted and frame is not None:
                w_low = _density_weight(frame, mode, s, True)
                w_hi = _density_weight(frame, mode, s, False)
                e_low[s] = g.integrate(w_low * dens0)
                e_k[s] = [g.integrate(w_hi * _combine(sq, k, 1, g.shape)) for k in range(K + 2)]
                rates["low"][s] = g.integrate(w_low * grad1)
                rates["k"][s] = [g.integrate(w_hi * _combine(sq, k, 2, g.shape)) for k in range(K + 1)]
            else:
                e_low[s] = 0.0
                e_k[s] = [0.0] * (K + 2)
                rates["low"][s] = 0.0
                rates["k"][s] = [0.0] * (K + 1)
        S.step.append(step)
        S.t.append(t)
        S.E_plus.append(e_low[1])
        S.E_minus.append(e_low[-1])
        S.E_plus_k.append(e_k[1])
        S.E_minus_k.append(e_k[-1])
        S.sobolev.append(sobolev_energies(state, 2))
        S.Etotal_mu.append(total_energy(e_low, e_k, mu, K))
        accumulate_diffusion(S, rates, dt)
        S.L2_plus.append(g.spectral_norm2(state.zp_hat))
        S.L2_minus.append(g.spectral_norm2(state.zm_hat))
        if self.dissipation is not None:
            q = np.asarray(self.dissipation(), float)
        else:
            if self._last_unweighted is not None:
                lp, lm = self._last_unweighted
                self._q = self._q + 2 * mu * dt * 0.5 * np.array([lp + grad_rates[1], lm + grad_rates[-1]])
            q = self._q
        self._last_unweighted = (grad_rates[1], grad_rates[-1])
        S.Q_plus.append(float(q[0]))
        S.Q_minus.append(float(q[1]))


def energy_identity_residual(series: DiagnosticsSeries) -> float:
    """Max over records of the relative unweighted energy-balance defect."""
    return float(np.max(series.identity_residuals()))


@dataclass
class DivCurlResult:
    lhs: float
    rhs_curl: float
    rhs_weight: float
    ok: bool


def div_curl_check(grid: Grid3, v: np.ndarray, lam: np.ndarray, grad_lam: np.ndarray | None = None) -> DivCurlResult:
    """Weighted div-curl inequality ``||sqrt(l) grad v||^2 <= 2 ||sqrt(l) curl v||^2 + 4 ||(|grad l|/sqrt(l)) v||^2``.

    ``v`` is projected to its divergence-free, zero-mean band part first.
    ``grad_lam`` defaults to second-order finite differences of the (generally
    non-periodic) nodal weight.
    """
    lam = np.asarray(lam, float)
    if lam.shape != grid.shape:
        lam = np.broadcast_to(lam, grid.shape)
    if np.any(lam <= 0):
        raise ValueError("weight must be positive everywhere")
    vh = grid.leray_hat(grid.fft(np.asarray(v, float)) * grid.nyquist_free_mask)
    vh[:, 0, 0, 0] = 0.0
    vv = grid.ifft(vh)
    gv = grid.ifft(grid.grad_hat(vh))
    cv = grid.ifft(grid.curl_hat(vh))
    if grad_lam is None:
        grad_lam = np.stack(np.gradient(lam, *grid.spacing, edge_order=2)) if lam.ndim == 3 else np.zeros((3,) + grid.shape)
    lhs = grid.integrate(lam * np.sum(gv * gv, axis=(0, 1)))
    rc = grid.integrate(lam * np.sum(cv * cv, axis=0))
    rw = grid.integrate(np.sum(grad_lam * grad_lam, axis=0) / lam * np.sum(vv * vv, axis=0))
    return DivCurlResult(lhs, rc, rw, bool(lhs <= 2 * rc + 4 * rw))


class FluxAccumulator:
    """Running weighted fluxes of ``z_side`` through the level sets ``u_side = c``.

    The hypersurfaces are time-stacked graphs ``x3 = eta(t, x1, x2)`` found per
    column of the nodal ``u`` field.  ``density`` is ``"weighted"`` (the flux
    integrand of the chosen weight mode, lowest order plus ``orders``) or
    ``"unit"`` (integrand 1, which measures the surface).  ``measure`` picks the
    surface element: ``"characteristic"`` uses
    ``sqrt(1 + (Z.grad u)^2 + |grad_h u|^2)``; ``"graph"`` uses the exact
    graph element ``sqrt(1 + |d_t eta|^2 + |grad_h eta|^2)``.
    """

    def __init__(self, side, levels, mode: WeightMode | None = None, orders=(), density: str = "weighted",
                 measure: str = "characteristic"):
        self.side = _side(side)
        self.levels = np.asarray(levels, float).ravel()
        self.mode = mode if mode is not None else WeightMode()
        self.orders = tuple(int(k) for k in orders)
        if density not in ("weighted", "unit"):
            raise ValueError("density must be 'weighted' or 'unit'")
        if measure not in ("characteristic", "graph"):
            raise ValueError("measure must be 'characteristic' or 'graph'")
        self.density = density
        self.measure = measure
        ncol = 1 + len(self.orders)
        self.flux = np.zeros((len(self.levels), ncol))
        self.history: list[tuple[float, np.ndarray]] = []
        self._last: tuple[float, np.ndarray] | None = None
        self.eta: np.ndarray | None = None

    def graph(self, frame: CharacteristicFrame) -> np.ndarray:
        """``eta`` with shape ``(levels, N1, N2)`` (unwrapped heights)."""
        g = frame.grid
        u = np.ascontiguousarray(frame.u(self.side))
        out = np.empty((len(self.levels),) + g.shape[:2])
        bad = kernels.column_roots(u, float(g.box[2]), np.ascontiguousarray(self.levels), out)
        if bad:
            raise FluxError(f"{bad} column(s) not monotone in x3: level sets are not graphs")
        return g.origin[2] + out * g.spacing[2]

    def surface_integrals(self, state: ElsasserState, frame: CharacteristicFrame) -> np.ndarray:
        """Instantaneous ``int_{graph} density dsigma / dt`` per level and order."""
        g = state.grid
        s = self.side
        eta = self.graph(frame)
        self.eta = eta
        x1, x2 = np.meshgrid(g.axes[0], g.axes[1], indexing="ij")
        nl = len(self.levels)
        pts = np.stack([np.broadcast_to(x1, eta.shape), np.broadcast_to(x2, eta.shape), eta], axis=-1).reshape(-1, 3)
        zh = _state_hat(state, s)
        z = g.ifft(zh)
        phi3_hat = (frame.phi_plus_hat if s > 0 else frame.phi_minus_hat)[2]
        gphi = g.ifft(g.grad_hat(phi3_hat))
        stack = [z, gphi]
        for k in self.orders:
            stack.append(derivative_density(g, zh, k, 1)[None])
        vals = interpolate(g, np.concatenate(stack, axis=0), pts)
        zs = vals[:3]
        gu = vals[3:6].copy()
        gu[2] += 1.0
        Zs = zs.copy()
        Zs[2] += s * state.b0
        zdg = np.sum(Zs * gu, axis=0)
        if self.measure == "characteristic":
            meas = np.sqrt(1.0 + zdg**2 + gu[0] ** 2 + gu[1] ** 2)
        else:
            d3 = gu[2]
            meas = np.sqrt(1.0 + (zdg / d3) ** 2 + (gu[0] ** 2 + gu[1] ** 2) / d3**2)
        area = g.spacing[0] * g.spacing[1]
        cols = []
        if self.density == "unit":
            cols.append(np.sum(meas.reshape(nl, -1), axis=1) * area)
            for _ in self.orders:
                cols.append(cols[0].copy())
        else:
            coords = coordinates_at(frame, -s, pts)
            w_low = _density_weight(frame, self.mode, s, True, coords)
            w_hi = _density_weight(frame, self.mode, s, False, coords)
            dens0 = np.sum(zs * zs, axis=0)
            cols.append(np.sum((w_low * dens0 * meas).reshape(nl, -1), axis=1) * area)
            for j, _ in enumerate(self.orders):
                dk = np.maximum(vals[6 + j], 0.0)
                cols.append(np.sum((w_hi * dk * meas).reshape(nl, -1), axis=1) * area)
        return np.stack(cols, axis=1)

    def accumulate(self, state: ElsasserState, frame: CharacteristicFrame) -> np.ndarray:
        """Trapezoidal time update; returns the running fluxes ``(levels, 1 + len(orders))``."""
        cur = self.surface_integrals(state, frame)
        t = state.t
        if self._last is not None:
            t0, prev = self._last
            self.flux = self.flux + 0.5 * (t - t0) * (prev + cur)
        self._last = (t, cur)
        self.history.append((t, self.flux.copy()))
        return self.flux


def _fmt(x: float) -> str:
    return repr(float(x))


def write_diagnostics_csv(path, series: DiagnosticsSeries) -> None:
    K = series.K
    res = series.identity_residuals() if len(series) else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "E_plus", "E_minus"]
                   + [f"E_plus_k{k}" for k in range(K + 1)] + [f"E_minus_k{k}" for k in range(K + 1)]
                   + ["D_plus", "D_minus", "Etotal_mu", "energy_identity_residual"])
        for i in range(len(series)):
            w.writerow([series.step[i], _fmt(series.t[i]), _fmt(series.E_plus[i]), _fmt(series.E_minus[i])]
                       + [_fmt(x) for x in series.E_plus_k[i][:K + 1]] + [_fmt(x) for x in series.E_minus_k[i][:K + 1]]
                       + [_fmt(series.D_plus[i]), _fmt(series.D_minus[i]), _fmt(series.Etotal_mu[i]), _fmt(res[i])])


def write_flux_csv(path, accumulators) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        orders = max((len(a.orders) for a in accumulators), default=0)
        w.writerow(["side", "level", "t", "flux"] + [f"flux_k{j}" for j in range(orders)])
        for acc in accumulators:
            name = "+" if acc.side > 0 else "-"
            for t, F in acc.history:
                for li, c in enumerate(acc.levels):
                    row = [name, _fmt(c), _fmt(t)] + [_fmt(x) for x in F[li]]
                    w.writerow(row + [""] * (4 + orders - len(row)))
