"""Characteristic geometry: transported coordinates, flow maps, weights, monitors.

Transported coordinates are stored as periodic deviations from the
background motion::

    x1^+- = x1 + phi1^+-,   x2^+- = x2 + phi2^+-,   u_+- = x3 -+ |B0| t + phi3^+-

Since ``L+- x_i = z+-^i`` and ``L+- (x3 -+ |B0| t) = z+-^3`` the deviations obey
``d_t phi + Z+- . grad phi = -z+-`` with zero initial data.

Marker clouds carry the flow maps ``psi_+-(t, y)`` (unwrapped positions) and
their Jacobians ``J = d psi / d y`` from ``dJ/dt = (grad Z)(psi) J``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .grid import Grid3
from .interp import interpolate
from .solver import ElsasserState, SolverConfig, StageFields, Stepper

__all__ = [
    "CharacteristicFrame",
    "FrameComponent",
    "MarkerCloud",
    "MarkerComponent",
    "WeightMode",
    "GeometryError",
    "advance_frame",
    "advance_markers",
    "weight",
    "weight_at",
    "coordinates_at",
    "separation_report",
    "SeparationReport",
    "normal_product",
    "NormalProductReport",
    "normal_product_report",
    "jacobian_ansatz_report",
    "duality_defect",
    "weight_transport_defect",
    "monotonicity_margin",
    "write_marker_csv",
    "lattice_labels",
]

NORMAL_PRODUCT_BOUNDS = (7.0 / 16.0, 4.0)


class GeometryError(RuntimeError):
    """Degenerate characteristic geometry (the small-data ansatz broke down)."""


def _side(side) -> int:
    if side in (1, "+", "plus"):
        return 1
    if side in (-1, "-", "minus"):
        return -1
    raise ValueError(f"side must be +1/-1, got {side!r}")


@dataclass
class CharacteristicFrame:
    """Deviation fields ``phi_+-`` (spectral, shape ``(3, N1, N2, N3//2+1)``) at time ``t``."""

    grid: Grid3
    phi_plus_hat: np.ndarray
    phi_minus_hat: np.ndarray
    t: float = 0.0
    b0: float = 1.0

    @classmethod
    def initial(cls, grid: Grid3, t: float = 0.0, b0: float = 1.0) -> "CharacteristicFrame":
        z = np.zeros((3,) + grid.spectral_shape, complex)
        return cls(grid, z, z.copy(), t=t, b0=b0)

    def copy(self) -> "CharacteristicFrame":
        return CharacteristicFrame(self.grid, self.phi_plus_hat.copy(), self.phi_minus_hat.copy(), self.t, self.b0)

    def phi(self, side) -> np.ndarray:
        """Physical deviation fields ``(3, N1, N2, N3)``."""
        return self.grid.ifft(self.phi_plus_hat if _side(side) > 0 else self.phi_minus_hat)

    def coordinates(self, side) -> np.ndarray:
        """``(x1^s, x2^s, u_s)`` on the grid nodes, shape ``(3, N1, N2, N3)``."""
        s = _side(side)
        ph = self.phi(s)
        x1, x2, x3 = self.grid.coords
        return np.stack([
            x1 + ph[0],
            x2 + ph[1],
            x3 - s * self.b0 * self.t + ph[2],
        ])

    def u(self, side) -> np.ndarray:
        s = _side(side)
        hat = self.phi_plus_hat if s > 0 else self.phi_minus_hat
        x3 = self.grid.coords[2]
        return np.broadcast_to(x3 - s * self.b0 * self.t, self.grid.shape) + self.grid.ifft(hat[2])

    def grad_u(self, side) -> np.ndarray:
        """``grad u_s = e3 + grad phi3^s``."""
        s = _side(side)
        hat = self.phi_plus_hat if s > 0 else self.phi_minus_hat
        g = self.grid.ifft(self.grid.grad_hat(hat[2]))
        g[2] += 1.0
        return g


class FrameComponent:
    """Stepper attachment advancing a :class:`CharacteristicFrame`."""

    name = "frame"

    def __init__(self, frame: CharacteristicFrame):
        self.frame = frame
        self.value = (frame.phi_plus_hat.copy(), frame.phi_minus_hat.copy())

    @staticmethod
    def _rhs(fields: StageFields, phi_hat: np.ndarray, side: int) -> np.ndarray:
        g = fields.grid
        z = fields.zp if side > 0 else fields.zm
        z_hat = fields.zp_hat if side > 0 else fields.zm_hat
        gphi = g.ifft(g.grad_hat(phi_hat))  # [i, j] = d_j phi^i
        adv = np.einsum("j...,ij...->i...", z, gphi)
        adv_hat = g.fft(adv) * fields.mask
        ik3 = 1j * fields.b0 * g.k_odd[2]
        return -adv_hat - side * ik3 * phi_hat - z_hat

    def derivative(self, fields: StageFields, values: dict) -> tuple:
        pp, pm = values[self.name]
        return (self._rhs(fields, pp, 1), self._rhs(fields, pm, -1))

    def sync(self, t: float) -> CharacteristicFrame:
        self.frame = CharacteristicFrame(self.frame.grid, self.value[0], self.value[1], t, self.frame.b0)
        return self.frame


def lattice_labels(grid: Grid3, stride: int = 4, offset: int = 0) -> np.ndarray:
    """Grid sub-lattice (every ``stride``-th node per axis) as label points ``(n, 3)``."""
    axes = [ax[offset::stride] for ax in grid.axes]
    m = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in m], axis=1)


@dataclass
class MarkerCloud:
    """Labels ``y`` with flow-map positions and Jacobians for both families."""

    labels: np.ndarray
    pos_plus: np.ndarray = None
    pos_minus: np.ndarray = None
    jac_plus: np.ndarray = None
    jac_minus: np.ndarray = None
    t: float = 0.0

    def __post_init__(self):
        self.labels = np.ascontiguousarray(np.asarray(self.labels, float).reshape(-1, 3))
        n = len(self.labels)
        eye = np.broadcast_to(np.eye(3), (n, 3, 3))
        if self.pos_plus is None:
            self.pos_plus = self.labels.copy()
        if self.pos_minus is None:
            self.pos_minus = self.labels.copy()
        if self.jac_plus is None:
            self.jac_plus = eye.copy()
        if self.jac_minus is None:
            self.jac_minus = eye.copy()

    @classmethod
    def lattice(cls, grid: Grid3, stride: int = 4, extra: np.ndarray | None = None) -> "MarkerCloud":
        y = lattice_labels(grid, stride)
        if extra is not None and len(extra):
            y = np.vstack([y, np.asarray(extra, float).reshape(-1, 3)])
        return cls(y)

    def __len__(self) -> int:
        return len(self.labels)

    def positions(self, side) -> np.ndarray:
        return self.pos_plus if _side(side) > 0 else self.pos_minus

    def jacobians(self, side) -> np.ndarray:
        return self.jac_plus if _side(side) > 0 else self.jac_minus

    def copy(self) -> "MarkerCloud":
        return MarkerCloud(self.labels.copy(), self.pos_plus.copy(), self.pos_minus.copy(),
                           self.jac_plus.copy(), self.jac_minus.copy(), self.t)


class MarkerComponent:
    """Stepper attachment for ``dpsi/dt = Z(psi)`` and ``dJ/dt = grad Z(psi) J``."""

    name = "markers"

    def __init__(self, cloud: MarkerCloud):
        self.cloud = cloud
        self.value = (cloud.pos_plus.copy(), cloud.pos_minus.copy(), cloud.jac_plus.copy(), cloud.jac_minus.copy())

    def derivative(self, fields: StageFields, values: dict) -> tuple:
        pp, pm, jp, jm = values[self.name]
        b0 = fields.b0
        out = []
        samples = []
        for side, pos in ((1, pp), (-1, pm)):
            names = ("zp", "grad_zp") if side > 0 else ("zm", "grad_zm")
            smp = fields.sample(pos, names)  # (12, n)
            vel = smp[:3].T.copy()
            vel[:, 2] += side * b0
            out.append(vel)
            samples.append(smp[3:].T.reshape(-1, 3, 3))
        djp = np.einsum("nij,njk->nik", samples[0], jp)
        djm = np.einsum("nij,njk->nik", samples[1], jm)
        return (out[0], out[1], djp, djm)

    def sync(self, t: float) -> MarkerCloud:
        pp, pm, jp, jm = self.value
        self.cloud = MarkerCloud(self.cloud.labels, pp, pm, jp, jm, t)
        return self.cloud


def _run_attached(state: ElsasserState, dt: float, components, config: SolverConfig | None):
    cfg = config if config is not None else SolverConfig(dt=dt)
    if cfg.dt != dt:
        cfg = replace(cfg, dt=dt)
    stepper = Stepper(state.copy(), cfg, components)
    stepper.step()
    return stepper.state


def advance_frame(frame: CharacteristicFrame, state: ElsasserState, dt: float,
                  config: SolverConfig | None = None) -> CharacteristicFrame:
    """Advance ``frame`` by one step of the solver's scheme (``state`` is not modified)."""
    if abs(frame.t - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ValueError(f"frame time {frame.t} does not match state time {state.t}")
    comp = FrameComponent(frame)
    new_state = _run_attached(state, dt, [comp], config)
    return comp.sync(new_state.t)


def advance_markers(cloud: MarkerCloud, state: ElsasserState, dt: float,
                    config: SolverConfig | None = None) -> MarkerCloud:
    """Advance marker positions and Jacobians by one step (``state`` is not modified)."""
    if abs(cloud.t - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ValueError(f"cloud time {cloud.t} does not match state time {state.t}")
    for p in (cloud.pos_plus, cloud.pos_minus):
        if not np.all(np.isfinite(p)):
            raise GeometryError("non-finite marker position")
    comp = MarkerComponent(cloud)
    new_state = _run_attached(state, dt, [comp], config)
    return comp.sync(new_state.t)


@dataclass(frozen=True)
class WeightMode:
    """``hybrid_log``: ``<w> = (R^2 + x1^2 + x2^2 + u^2)^(1/2)``;
    ``ideal_power``: ``<u>^omega = (R^2 + u^2)^(omega/2)`` with ``omega = 1 + delta``."""

    variant: str = "hybrid_log"
    R: float = 100.0
    delta: float = 0.1

    def __post_init__(self):
        if self.variant not in ("hybrid_log", "ideal_power"):
            raise ValueError(f"unknown weight variant {self.variant!r}")
        if self.variant == "hybrid_log" and self.R < 100:
            raise ValueError("hybrid_log weights require R >= 100")
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def omega(self) -> float:
        return 1.0 + self.delta

    def from_coordinates(self, coords: np.ndarray) -> np.ndarray:
        """Weight from ``(x1, x2, u)`` stacked on axis 0."""
        if self.variant == "hybrid_log":
            return np.sqrt(self.R**2 + coords[0] ** 2 + coords[1] ** 2 + coords[2] ** 2)
        return (self.R**2 + coords[2] ** 2) ** (self.omega / 2)


def weight(frame: CharacteristicFrame, mode: WeightMode) -> tuple[np.ndarray, np.ndarray]:
    """Nodal ``(<w+>, <w->)`` (hybrid) or ``(<u+>^omega, <u->^omega)`` (ideal)."""
    return mode.from_coordinates(frame.coordinates(1)), mode.from_coordinates(frame.coordinates(-1))


def coordinates_at(frame: CharacteristicFrame, side, points: np.ndarray) -> np.ndarray:
    """``(x1^s, x2^s, u_s)`` at arbitrary (unwrapped) points, shape ``(3, n)``."""
    s = _side(side)
    pts = np.asarray(points, float).reshape(-1, 3)
    ph = interpolate(frame.grid, frame.phi(s), pts)
    return np.stack([
        pts[:, 0] + ph[0],
        pts[:, 1] + ph[1],
        pts[:, 2] - s * frame.b0 * frame.t + ph[2],
    ])


def weight_at(frame: CharacteristicFrame, mode: WeightMode, side, points: np.ndarray) -> np.ndarray:
    return mode.from_coordinates(coordinates_at(frame, side, points))


@dataclass
class SeparationReport:
    t: float
    min_sep: float
    max_sep: float
    bound_ok: bool
    weight_product_min: float
    weight_bound: float
    weight_bound_ok: bool
    amplitude: float
    reliable: bool


def separation_report(frame: CharacteristicFrame, t: float | None = None, state: ElsasserState | None = None,
                      R: float = 100.0) -> SeparationReport:
    """``min/max |u+ - u-|`` over the grid and the two-sided bound ``b0 t <= |u+ - u-| <= 3 b0 t``.

    Also checks ``<w+><w-> >= (R/2) (R^2 + t^2)^(1/2)`` for the hybrid weights.
    With ``state`` given, the report is marked unreliable when ``sup|z| > 1/2``.
    """
    t = frame.t if t is None else t
    if abs(t - frame.t) > 1e-12 * max(1.0, abs(t)):
        raise ValueError("frame is not at the requested time")
    up, um = frame.u(1), frame.u(-1)
    sep = np.abs(up - um)
    lo, hi = float(sep.min()), float(sep.max())
    b0t = frame.b0 * t
    tol = 1e-12 * max(1.0, b0t)
    ok = bool(lo >= b0t - tol and hi <= 3 * b0t + tol)
    mode = WeightMode("hybrid_log", R=R)
    wp, wm = weight(frame, mode)
    prod = float(np.min(wp * wm))
    wb = 0.5 * R * np.sqrt(R**2 + t**2)
    amp = 0.0
    if state is not None:
        amp = max(state.max_abs())
    return SeparationReport(t, lo, hi, ok, prod, float(wb), bool(prod >= wb), amp, amp <= 0.5)


@dataclass
class NormalProductReport:
    side: int
    min: float
    max: float
    within_bounds: bool


def normal_product(frame: CharacteristicFrame, state: ElsasserState, side) -> np.ndarray:
    """Nodal ``<L_-s, nu_s>`` for the hypersurfaces ``u_s = const``.

    ``d_t u_s`` is taken from the transport identity ``d_t u_s = -Z_s . grad u_s``,
    so ``<L_-s, nu_s> = s (Z_s - Z_-s) . grad u_s / |grad_{t,x} u_s|``.  The
    factor ``s`` orients ``nu_-`` so that both products are positive
    (``sqrt 2`` for zero data).
    """
    s = _side(side)
    if abs(frame.t - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ValueError("frame and state times differ")
    gu = frame.grad_u(s)
    zs = state.z_plus if s > 0 else state.z_minus
    zo = state.z_minus if s > 0 else state.z_plus
    Zs = zs.copy()
    Zs[2] += s * state.b0
    Zo = zo.copy()
    Zo[2] -= s * state.b0
    zdotgu = np.sum(Zs * gu, axis=0)
    num = np.sum((Zs - Zo) * gu, axis=0)
    den = np.sqrt(zdotgu**2 + np.sum(gu * gu, axis=0))
    if float(den.min()) < 1e-8:
        raise GeometryError("|grad_{t,x} u| below 1e-8: characteristic geometry degenerate")
    return s * num / den


def normal_product_report(frame: CharacteristicFrame, state: ElsasserState, side) -> NormalProductReport:
    v = normal_product(frame, state, side)
    lo, hi = float(v.min()), float(v.max())
    a, b = NORMAL_PRODUCT_BOUNDS
    return NormalProductReport(_side(side), lo, hi, bool(a <= lo and hi <= b))


def jacobian_ansatz_report(cloud: MarkerCloud) -> tuple[float, float]:
    """``(max |J - I|, max |det J - 1|)`` over markers and both families.

    ``|J - I|`` is the largest entry in absolute value.
    """
    dev, det = 0.0, 0.0
    eye = np.eye(3)
    for J in (cloud.jac_plus, cloud.jac_minus):
        if len(J):
            dev = max(dev, float(np.max(np.abs(J - eye))))
            det = max(det, float(np.max(np.abs(np.linalg.det(J) - 1.0))))
    return dev, det


def duality_defect(frame: CharacteristicFrame, cloud: MarkerCloud) -> float:
    """``max |u_s(t, psi_s(t, y)) - y3|`` over markers and sides."""
    out = 0.0
    for s in (1, -1):
        u = coordinates_at(frame, s, cloud.positions(s))[2]
        out = max(out, float(np.max(np.abs(u - cloud.labels[:, 2]))))
    return out


def weight_transport_defect(frame: CharacteristicFrame, cloud: MarkerCloud, mode: WeightMode) -> float:
    """Relative change of ``<w_s>`` along ``psi_s`` since t=0 (zero for exact transport)."""
    out = 0.0
    w0 = mode.from_coordinates(cloud.labels.T)
    for s in (1, -1):
        w = weight_at(frame, mode, s, cloud.positions(s))
        out = max(out, float(np.max(np.abs(w - w0) / w0)))
    return out


def monotonicity_margin(frame: CharacteristicFrame) -> float:
    """``min d3 u_s`` over nodes and sides (must stay positive)."""
    return float(min(frame.grad_u(1)[2].min(), frame.grad_u(-1)[2].min()))


def write_marker_csv(path, rows: Iterable[tuple[int, float, MarkerCloud]], append: bool = False) -> None:
    """Marker trajectory dump; one row per (step, marker, side)."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["step", "t", "label_y1", "label_y2", "label_y3", "side",
                        "pos1", "pos2", "pos3", "detJ", "maxJminusI"])
        eye = np.eye(3)
        for step, t, cloud in rows:
            for s, name in ((1, "+"), (-1, "-")):
                P = cloud.positions(s)
                J = cloud.jacobians(s)
                det = np.linalg.det(J)
                dev = np.max(np.abs(J - eye), axis=(1, 2))
                for i in range(len(cloud)):
                    y = cloud.labels[i]
                    w.writerow([step, repr(float(t)), repr(float(y[0])), repr(float(y[1])), repr(float(y[2])), name,
                                repr(float(P[i, 0])), repr(float(P[i, 1])), repr(float(P[i, 2])),
                                repr(float(det[i])), repr(float(dev[i]))])
