"""Along-characteristic accumulators and approximate scattering fields.

``z+`` is transported by ``L- = d_t + Z- . grad``, so along the ``-`` flow map::

    z+(t, psi_-(t, y)) = z+(0, y) - int_0^t (grad p)(tau, psi_-(tau, y)) dtau
    j+(t, psi_-(t, y)) = j+(0, y) - int_0^t (grad z- ^ grad z+)(tau, psi_-(tau, y)) dtau

with ``j = curl z``, and symmetrically for ``z-`` along ``psi_+``.  The label
``y = (y1, y2, y3)`` is also the characteristic coordinate ``(x1^-, x2^-, u_-)``
of the line, so the final values define the scattering fields on the label grid.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import MarkerCloud, MarkerComponent
from .interp import interpolate
from .solver import ElsasserState, SolverConfig, StageFields, Stepper

log = logging.getLogger(__name__)

__all__ = [
    "LineRecords",
    "ScatteringComponent",
    "ScatteringRecord",
    "accumulate",
    "characteristic_identity_residual",
    "scattering_field",
    "linearization_deviation",
    "LinearizationResult",
    "weighted_label_norm",
    "fit_decay_exponent",
    "write_scattering_csv",
    "sample_gradp_sup",
    "label_cell",
    "run_lines",
]


@dataclass
class LineRecords:
    """Accumulators for the lines of both families, indexed like ``cloud.labels``.

    ``plus`` entries belong to ``z+`` (lines ride ``psi_-``); ``minus`` to ``z-``.
    """

    labels: np.ndarray
    z0: dict
    j0: dict
    gradp: dict
    wedge: dict
    t: float = 0.0
    history: list = field(default_factory=list)  # (t, sup|grad p| on + lines, on - lines)
    # grid sup of |z| and |curl z| at the start, the scale of the identity residual
    scale: dict | None = None

    @classmethod
    def start(cls, state: ElsasserState, labels: np.ndarray) -> "LineRecords":
        g = state.grid
        labels = np.asarray(labels, float).reshape(-1, 3)
        zp, zm = state.z_plus, state.z_minus
        jp = g.ifft(g.curl_hat(state.zp_hat))
        jm = g.ifft(g.curl_hat(state.zm_hat))
        vals = interpolate(g, np.concatenate([zp, zm, jp, jm]), labels)
        n = len(labels)
        rec = cls(labels,
                  {1: vals[0:3].T.copy(), -1: vals[3:6].T.copy()},
                  {1: vals[6:9].T.copy(), -1: vals[9:12].T.copy()},
                  {1: np.zeros((n, 3)), -1: np.zeros((n, 3))},
                  {1: np.zeros((n, 3)), -1: np.zeros((n, 3))},
                  t=state.t)

        def sup(f):
            return float(np.sqrt(np.max(np.sum(f * f, axis=0))))

        rec.scale = {"z": {1: sup(zp), -1: sup(zm)}, "curl": {1: sup(jp), -1: sup(jm)}}
        return rec

    def __len__(self) -> int:
        return len(self.labels)


class ScatteringComponent:
    """Stepper attachment integrating ``grad p`` and the wedge term along the lines.

    Must be used together with a :class:`~alfven.geometry.MarkerComponent`
    whose cloud has the same labels; the stage positions come from it, so the
    quadrature order matches the flow.
    """

    name = "lines"

    def __init__(self, records: LineRecords, markers: str = "markers"):
        self.records = records
        self.markers = markers
        r = records
        self.value = (r.gradp[1].copy(), r.wedge[1].copy(), r.gradp[-1].copy(), r.wedge[-1].copy())

    def derivative(self, fields: StageFields, values: dict) -> tuple:
        pp, pm = values[self.markers][0], values[self.markers][1]
        a = fields.sample(pm, ("grad_p", "wedge_mp"))  # z+ lines ride psi_-
        b = fields.sample(pp, ("grad_p", "wedge_pm"))
        return (a[:3].T.copy(), a[3:6].T.copy(), b[:3].T.copy(), b[3:6].T.copy())

    def sync(self, t: float) -> LineRecords:
        r = self.records
        r.gradp = {1: self.value[0], -1: self.value[2]}
        r.wedge = {1: self.value[1], -1: self.value[3]}
        r.t = t
        return r


def sample_gradp_sup(state: ElsasserState, cloud: MarkerCloud, config: SolverConfig | None = None) -> tuple[float, float]:
    """``sup |grad p|`` over the ``+`` lines (at ``psi_-``) and the ``-`` lines (at ``psi_+``)."""
    g = state.grid
    f = StageFields(g, state.zp_hat, state.zm_hat, state.t, state.b0,
                    pressure_sign=-1.0 if (config is not None and config.mutate_pressure_sign) else 1.0)
    gp = f.grad_p
    a = interpolate(g, gp, cloud.pos_minus)
    b = interpolate(g, gp, cloud.pos_plus)
    return float(np.max(np.linalg.norm(a, axis=0))), float(np.max(np.linalg.norm(b, axis=0)))


def accumulate(records: LineRecords, state: ElsasserState, cloud: MarkerCloud, dt: float,
               config: SolverConfig | None = None) -> tuple[LineRecords, MarkerCloud, ElsasserState]:
    """One joint step of markers and accumulators; returns updated copies."""
    if abs(records.t - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ValueError("records and state times differ")
    for p in (cloud.pos_plus, cloud.pos_minus):
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite line position")
    cfg = config if config is not None else SolverConfig(dt=dt)
    mc = MarkerComponent(cloud)
    sc = ScatteringComponent(LineRecords(records.labels, records.z0, records.j0,
                                         {k: v.copy() for k, v in records.gradp.items()},
                                         {k: v.copy() for k, v in records.wedge.items()},
                                         records.t, list(records.history), records.scale))
    st = Stepper(state.copy(), cfg, [mc, sc])
    st.step()
    return sc.sync(st.state.t), mc.sync(st.state.t), st.state


def _sample_now(state: ElsasserState, cloud: MarkerCloud) -> dict:
    g = state.grid
    jp = g.ifft(g.curl_hat(state.zp_hat))
    jm = g.ifft(g.curl_hat(state.zm_hat))
    a = interpolate(g, np.concatenate([state.z_plus, jp]), cloud.pos_minus)
    b = interpolate(g, np.concatenate([state.z_minus, jm]), cloud.pos_plus)
    return {"z": {1: a[:3].T, -1: b[:3].T}, "j": {1: a[3:].T, -1: b[3:].T}}


def characteristic_identity_residual(records: LineRecords, state: ElsasserState, cloud: MarkerCloud) -> dict:
    """Relative defects of the along-line identities for ``z+-`` and ``curl z+-``.

    Each entry is ``max_lines |q(line, t) - q(line, 0) + accum| / (eps + |q(line, 0)|)``
    where ``eps`` is the grid sup of ``|q|`` at the start (recorded by
    :meth:`LineRecords.start`; the largest line value otherwise).  A field
    that vanishes identically gives the absolute defect.  Only defined for
    ``mu = 0``.
    """
    if state.mu != 0:
        raise ValueError("the along-characteristic identities hold only for the ideal system (mu = 0)")
    now = _sample_now(state, cloud)
    out = {}
    for key, init, acc in (("z", records.z0, records.gradp), ("curl", records.j0, records.wedge)):
        for s, name in ((1, "plus"), (-1, "minus")):
            q0 = init[s]
            mag0 = np.linalg.norm(q0, axis=1)
            if records.scale is not None:
                eps = records.scale[key][s]
            else:
                eps = float(mag0.max()) if len(mag0) else 0.0
            d = np.linalg.norm(now["z" if key == "z" else "j"][s] - q0 + acc[s], axis=1)
            if not len(d):
                out[f"{key}_{name}"] = 0.0
            elif eps == 0.0:
                out[f"{key}_{name}"] = float(d.max())
            else:
                out[f"{key}_{name}"] = float(np.max(d / (eps + mag0)))
    out["max"] = max(out.values()) if out else 0.0
    return out


def fit_decay_exponent(times, sups, t_min: float | None = None) -> float:
    """Least-squares ``omega`` in ``sup|grad p| ~ C (1+t)^(-omega)`` over ``t >= t_min``.

    Defaults to the second half of the record.  Returns ``nan`` when fewer
    than two usable points remain.
    """
    t = np.asarray(times, float)
    y = np.asarray(sups, float)
    if t_min is None and len(t):
        t_min = 0.5 * t.max()
    sel = (t >= (t_min or 0.0)) & (y > 0)
    if np.count_nonzero(sel) < 2:
        return float("nan")
    A = np.stack([np.ones(np.count_nonzero(sel)), -np.log1p(t[sel])], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(y[sel]), rcond=None)
    return float(coef[1])


@dataclass
class ScatteringRecord:
    labels: np.ndarray
    z0: dict
    j0: dict
    z_scatter: dict
    curl_scatter: dict
    gradp_T: dict
    tail: dict
    T: float
    omega_fit: float
    status: str


def scattering_field(records: LineRecords, T: float, gradp_at_T: dict | None = None,
                     accuracy: float | None = None) -> ScatteringRecord:
    """Truncate the infinite-time formulas at ``T`` and report the tail.

    ``z_scatter = z(0) - int_0^T grad p`` and ``curl z_scatter = j(0) - int_0^T wedge``.
    The tail per line is ``|grad p(line, T)| (1+T) / (omega - 1)`` with
    ``omega`` fitted to the recorded decay of ``sup|grad p|``; it is infinite
    when the fitted exponent does not exceed 1.  ``status`` is ``"warning"``
    when the largest tail exceeds ``accuracy``.
    """
    if abs(records.t - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"records are at t={records.t}, not at T={T}")
    hist = np.asarray(records.history, float).reshape(-1, 3)
    sup = np.maximum(hist[:, 1], hist[:, 2]) if len(hist) else np.array([])
    omega = fit_decay_exponent(hist[:, 0], sup) if len(hist) else float("nan")
    n = len(records)
    tail = {}
    gpT = gradp_at_T if gradp_at_T is not None else {1: np.zeros((n, 3)), -1: np.zeros((n, 3))}
    for s in (1, -1):
        mag = np.linalg.norm(gpT[s], axis=1)
        if np.all(mag == 0):
            tail[s] = np.zeros(n)
        elif np.isfinite(omega) and omega > 1:
            tail[s] = mag * (1.0 + T) / (omega - 1.0)
        else:
            tail[s] = np.full(n, np.inf)
    zs = {s: records.z0[s] - records.gradp[s] for s in (1, -1)}
    js = {s: records.j0[s] - records.wedge[s] for s in (1, -1)}
    worst = max(float(np.max(tail[s])) if n else 0.0 for s in (1, -1))
    status = "ok"
    if accuracy is not None and worst > accuracy:
        status = "warning"
        log.warning("scattering tail estimate %.3g exceeds requested accuracy %.3g", worst, accuracy)
    return ScatteringRecord(records.labels, records.z0, records.j0, zs, js, gpT, tail, T, omega, status)


def label_cell(labels: np.ndarray) -> float:
    """Cell volume ``dy1 dy2 du`` of a regular label lattice."""
    v = 1.0
    for ax in range(3):
        u = np.unique(np.round(labels[:, ax], 12))
        v *= float(np.min(np.diff(u))) if len(u) > 1 else 1.0
    return v


def weighted_label_norm(labels: np.ndarray, values: dict, R: float = 100.0, omega: float = 1.1) -> float:
    """``(sum_s sum_lines (R^2 + u^2)^omega |v|^2 dy1 dy2 du)^(1/2)`` on the label grid."""
    w = (R**2 + labels[:, 2] ** 2) ** omega
    cell = label_cell(labels)
    tot = 0.0
    for s in (1, -1):
        v = np.asarray(values[s])
        tot += float(np.sum(w * np.sum(v * v, axis=1))) * cell
    return math.sqrt(tot)


def run_lines(state: ElsasserState, T: float, dt: float, stride: int = 4, history_every: int = 10,
              config: SolverConfig | None = None):
    """Ideal run with markers and line accumulators from ``state`` to ``T``.

    Returns ``(ScatteringRecord, LineRecords, MarkerCloud, final state)``.
    The decay of ``sup|grad p|`` is sampled every ``history_every`` steps
    for the tail estimate.
    """
    cfg = config if config is not None else SolverConfig(dt=dt)
    cloud = MarkerCloud.lattice(state.grid, stride)
    mc = MarkerComponent(cloud)
    sc = ScatteringComponent(LineRecords.start(state, cloud.labels))
    st = Stepper(state.copy(), cfg, [mc, sc])
    n = int(round((T - state.t) / dt))
    for i in range(1, n + 1):
        st.step()
        if i % history_every == 0 or i == n:
            c = mc.sync(st.state.t)
            sc.sync(st.state.t).history.append((st.state.t,) + sample_gradp_sup(st.state, c, cfg))
    fin = st.state
    cloud = mc.sync(fin.t)
    rec = sc.sync(fin.t)
    f = StageFields(fin.grid, fin.zp_hat, fin.zm_hat, fin.t, fin.b0,
                    pressure_sign=-1.0 if cfg.mutate_pressure_sign else 1.0)
    gp = f.grad_p
    gpT = {1: interpolate(fin.grid, gp, cloud.pos_minus).T, -1: interpolate(fin.grid, gp, cloud.pos_plus).T}
    return scattering_field(rec, fin.t, gpT), rec, cloud, fin


@dataclass
class LinearizationResult:
    amplitudes: list
    deviations: list
    tails: list
    exponent: float
    ratios: list
    records: list = field(default_factory=list)


def linearization_deviation(base_data: ElsasserState | None, amplitudes: list, T: float | None = None,
                            dt: float | None = None, stride: int = 4, R: float = 100.0, omega: float = 1.1,
                            records: list | None = None) -> LinearizationResult:
    """Deviation of the scattering map from its linearization (the identity in labels).

    For each amplitude ``a`` the ideal solver runs from ``a * base_data``
    (``base_data`` normalized to amplitude 1 is not required: the spectral
    coefficients are simply scaled) and ``d(a) = ||z_scatter - a z(0)||``
    in the label-grid norm with weight ``<u>^(2 omega)``.  Precomputed
    scattering records may be passed instead of running.  The fitted
    exponent is the slope of ``log d`` against ``log a``.
    """
    if records is None:
        if base_data is None or T is None or dt is None:
            raise ValueError("need base_data, T and dt when no records are supplied")
        if base_data.mu != 0:
            raise ValueError("the scattering map is defined for the ideal system (mu = 0)")
        records = []
        for a in amplitudes:
            st = replace(base_data, zp_hat=base_data.zp_hat * a, zm_hat=base_data.zm_hat * a, t=0.0)
            records.append(run_lines(st, T, dt, stride)[0])
    devs, tails = [], []
    for rec in records:
        diff = {s: rec.z_scatter[s] - rec.z0[s] for s in (1, -1)}
        devs.append(weighted_label_norm(rec.labels, diff, R, omega))
        if all(np.all(np.isfinite(rec.tail[s])) for s in (1, -1)):
            tails.append(weighted_label_norm(rec.labels, {s: rec.tail[s][:, None] for s in (1, -1)}, R, omega))
        else:
            tails.append(float("inf"))
    a = np.asarray(amplitudes, float)
    d = np.asarray(devs, float)
    sel = (a > 0) & (d > 0)
    exponent = float("nan")
    if np.count_nonzero(sel) >= 2:
        exponent = float(np.polyfit(np.log(a[sel]), np.log(d[sel]), 1)[0])
    ratios = [float(d[i] / d[i + 1]) if d[i + 1] > 0 else float("nan") for i in range(len(d) - 1)]
    return LinearizationResult(list(amplitudes), devs, tails, exponent, ratios, list(records))


def write_scattering_csv(path, rec: ScatteringRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["side", "y1", "y2", "u_label", "z1_0", "z2_0", "z3_0", "gp1", "gp2", "gp3",
                    "z1_T", "z2_T", "z3_T", "tail_estimate"])
        for s, name in ((1, "+"), (-1, "-")):
            gp = rec.z0[s] - rec.z_scatter[s]
            for i in range(len(rec.labels)):
                y = rec.labels[i]
                w.writerow([name] + [repr(float(x)) for x in (*y, *rec.z0[s][i], *gp[i], *rec.z_scatter[s][i], rec.tail[s][i])])
