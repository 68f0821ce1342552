"""Single-run driver: time loop, monitors, diagnostics and output files."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import fftback
from ..diagnostics import (DiagnosticsRecorder, FluxAccumulator, FluxError, write_diagnostics_csv,
                           write_flux_csv)
from ..geometry import (CharacteristicFrame, FrameComponent, GeometryError, MarkerCloud, MarkerComponent,
                        duality_defect, jacobian_ansatz_report, monotonicity_margin, normal_product_report,
                        separation_report, write_marker_csv)
from ..initial_data import DataContractError, make_initial_data
from ..interp import interpolate
from ..io import write_checkpoint, write_json
from ..scattering import (LineRecords, ScatteringComponent, characteristic_identity_residual,
                          sample_gradp_sup, scattering_field, write_scattering_csv)
from ..solver import DissipationIntegral, ElsasserState, SolverError, StageFields, Stepper
from .config import RunConfig

log = logging.getLogger(__name__)

__all__ = ["RunResult", "simulate", "MONITOR_COLUMNS", "shifted_transport_error"]

MONITOR_COLUMNS = ["step", "t", "sup_zp", "sup_zm", "sep_min", "sep_max", "sep_ok",
                   "np_plus_min", "np_plus_max", "np_minus_min", "np_minus_max",
                   "jac_dev", "det_dev", "duality", "monotonicity", "gradp_sup_plus", "gradp_sup_minus"]


@dataclass
class RunResult:
    config: RunConfig
    status: str
    message: str
    state: ElsasserState
    initial: ElsasserState
    recorder: DiagnosticsRecorder
    frame: CharacteristicFrame | None = None
    cloud: MarkerCloud | None = None
    lines: LineRecords | None = None
    scatter: object | None = None
    monitors: list = field(default_factory=list)
    flux: list = field(default_factory=list)
    transport: list = field(default_factory=list)
    identity: dict | None = None
    files: dict = field(default_factory=dict)
    steps: int = 0
    wall: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def series(self):
        return self.recorder.series

    def summary(self) -> dict:
        S = self.series
        out = {
            "status": self.status,
            "message": self.message,
            "steps": self.steps,
            "t": self.state.t,
            "energy_identity_residual": float(np.max(S.identity_residuals())) if len(S) and S.L2_plus[0] + S.L2_minus[0] > 0 else 0.0,
        }
        if self.monitors:
            m = np.asarray([[r[c] for c in MONITOR_COLUMNS] for r in self.monitors], float)
            for j, c in enumerate(MONITOR_COLUMNS[2:], 2):
                col = m[:, j]
                if np.all(np.isnan(col)):
                    continue
                out[f"{c}_min"] = float(np.nanmin(col))
                out[f"{c}_max"] = float(np.nanmax(col))
        if self.transport:
            out["transport_max_error"] = max(r[2] for r in self.transport)
            out["transport_other_side_max"] = max(r[3] for r in self.transport)
        if self.identity is not None:
            out["identity_residual"] = self.identity
        if self.scatter is not None:
            out["scatter_status"] = self.scatter.status
            out["scatter_omega_fit"] = self.scatter.omega_fit
            out["scatter_tail_max"] = max(float(np.max(self.scatter.tail[s])) for s in (1, -1)) if len(self.scatter.labels) else 0.0
        return out


def shifted_transport_error(initial: ElsasserState, state: ElsasserState) -> tuple[float, float] | None:
    """Compare with the exact decoupled solution when one family vanishes and ``mu = 0``.

    ``z- = 0`` gives ``z+(t, x) = z+(0, x + b0 t e3)`` (and symmetrically).
    Returns ``(max |error| / sup|z(0)|, sup|other family|)`` or ``None``.
    """
    if state.mu != 0:
        return None
    sp, sm = initial.max_abs()
    g = state.grid
    shift = state.b0 * (state.t - initial.t)
    if sm == 0 and sp > 0:
        exact = g.ifft(initial.zp_hat * np.exp(1j * g.k[2] * shift))
        err = np.max(np.abs(state.z_plus - exact)) / sp
        return float(err), state.max_abs()[1]
    if sp == 0 and sm > 0:
        exact = g.ifft(initial.zm_hat * np.exp(-1j * g.k[2] * shift))
        err = np.max(np.abs(state.z_minus - exact)) / sm
        return float(err), state.max_abs()[0]
    return None


def _nan() -> float:
    return float("nan")


def simulate(cfg: RunConfig, out_dir=None, write: bool = True, callback=None) -> RunResult:
    """Run one configured simulation.

    Monitor breaches (CFL, amplitude, monotonicity of ``u``, degenerate
    geometry, non-finite values) stop the run gracefully: the partial
    outputs are still written and ``status`` says why the run stopped.
    """
    t_start = time.perf_counter()
    fftback.set_threads(cfg.threads)
    g = cfg.grid()
    state0 = make_initial_data(cfg.data_spec(), g, mu=cfg.mu, b0=cfg.b0, t_final=cfg.t_final) \
        if cfg.family != "custom_checkpoint" else _checkpoint_data(cfg, g)
    scfg = cfg.solver_config()
    need_frame = cfg.frame and (cfg.weighted or bool(cfg.flux_levels))
    frame_c = FrameComponent(CharacteristicFrame.initial(g, b0=cfg.b0)) if (cfg.frame or need_frame) else None
    mark_c = MarkerComponent(MarkerCloud.lattice(g, cfg.marker_stride)) if cfg.marker_stride else None
    diss = DissipationIntegral(cfg.mu)
    line_c = None
    if cfg.scatter:
        line_c = ScatteringComponent(LineRecords.start(state0, mark_c.cloud.labels))
    comps = [c for c in (diss, frame_c, mark_c, line_c) if c is not None]
    stepper = Stepper(state0.copy(), scfg, comps)
    mode = cfg.weight()
    recorder = DiagnosticsRecorder(mode, K=cfg.K, mu=cfg.mu, dissipation=lambda: diss.total,
                                   weighted=cfg.weighted and frame_c is not None)
    fluxes = []
    if cfg.flux_levels:
        for s in (1, -1):
            fluxes.append(FluxAccumulator(s, cfg.flux_levels, mode, cfg.flux_orders,
                                          density=cfg.flux_density, measure=cfg.flux_measure))
    result = RunResult(cfg, "ok", "", stepper.state, state0, recorder, flux=fluxes)
    out = Path(out_dir if out_dir is not None else cfg.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    marker_rows = []
    checkpoints = []

    def observe(step: int) -> None:
        st = stepper.state
        fr = frame_c.sync(st.t) if frame_c is not None else None
        cl = mark_c.sync(st.t) if mark_c is not None else None
        recorder.record(step, st, fr if recorder.weighted else None)
        for acc in fluxes:
            acc.accumulate(st, fr)
        sp, sm = st.max_abs()
        row = dict.fromkeys(MONITOR_COLUMNS, _nan())
        row.update(step=step, t=st.t, sup_zp=sp, sup_zm=sm)
        if fr is not None:
            if st.t > 0:
                rep = separation_report(fr, st.t, st, cfg.R)
                row.update(sep_min=rep.min_sep, sep_max=rep.max_sep, sep_ok=float(rep.bound_ok))
            a, b = normal_product_report(fr, st, 1), normal_product_report(fr, st, -1)
            row.update(np_plus_min=a.min, np_plus_max=a.max, np_minus_min=b.min, np_minus_max=b.max,
                       monotonicity=monotonicity_margin(fr))
        if cl is not None:
            jd, dd = jacobian_ansatz_report(cl)
            row.update(jac_dev=jd, det_dev=dd)
            if fr is not None:
                row["duality"] = duality_defect(fr, cl)
            if cfg.marker_dump:
                marker_rows.append((step, st.t, cl))
        if line_c is not None:
            gp = sample_gradp_sup(st, cl, scfg)
            line_c.sync(st.t).history.append((st.t, gp[0], gp[1]))
            row.update(gradp_sup_plus=gp[0], gradp_sup_minus=gp[1])
        tr = shifted_transport_error(state0, st)
        if tr is not None:
            result.transport.append((step, st.t, tr[0], tr[1]))
        result.monitors.append(row)
        if max(sp, sm) >= 0.5 * cfg.b0:
            raise _Breach(f"amplitude monitor: sup|z| = {max(sp, sm):.4g} >= |B0|/2")
        if fr is not None and row["monotonicity"] <= 0:
            raise _Breach(f"monotonicity monitor: min d3 u = {row['monotonicity']:.4g} <= 0")

    try:
        observe(0)
        for n in range(1, cfg.nsteps + 1):
            stepper.step()
            if n % cfg.cadence == 0 or n == cfg.nsteps:
                observe(n)
            if write and cfg.checkpoint_every and n % cfg.checkpoint_every == 0 and n != cfg.nsteps:
                p = out / f"checkpoint_{n:06d}.bin"
                write_checkpoint(p, stepper.state)
                checkpoints.append(str(p))
            if callback is not None:
                callback(stepper)
        result.steps = cfg.nsteps
    except (_Breach, SolverError, GeometryError, FluxError) as exc:
        result.status = "stopped"
        result.message = f"{type(exc).__name__}: {exc}"
        result.steps = stepper.nsteps
        log.warning("run stopped at t=%.4g: %s", stepper.state.t, result.message)
    st = stepper.state
    result.state = st
    result.frame = frame_c.sync(st.t) if frame_c is not None else None
    result.cloud = mark_c.sync(st.t) if mark_c is not None else None
    if line_c is not None:
        rec = line_c.sync(st.t)
        result.lines = rec
        if cfg.mu == 0:
            result.identity = characteristic_identity_residual(rec, st, result.cloud)
        f = StageFields(g, st.zp_hat, st.zm_hat, st.t, st.b0,
                        pressure_sign=-1.0 if cfg.mutate_pressure_sign else 1.0)
        gp = f.grad_p
        gpT = {1: interpolate(g, gp, result.cloud.pos_minus).T, -1: interpolate(g, gp, result.cloud.pos_plus).T}
        result.scatter = scattering_field(rec, st.t, gpT, cfg.scatter_accuracy or None)
    result.wall = time.perf_counter() - t_start
    if write:
        _write_outputs(result, out, marker_rows, checkpoints)
    return result


class _Breach(RuntimeError):
    pass


def _checkpoint_data(cfg: RunConfig, g):
    state = make_initial_data(cfg.data_spec(), g, mu=cfg.mu, b0=cfg.b0)
    sp, sm = state.max_abs()
    if max(sp, sm) >= 0.5 * cfg.b0:
        raise DataContractError("checkpoint data are not small relative to |B0|")
    return state


def _write_outputs(result: RunResult, out: Path, marker_rows, checkpoints) -> None:
    files = result.files
    p = out / "diagnostics.csv"
    write_diagnostics_csv(p, result.series)
    files["diagnostics"] = str(p)
    p = out / "monitors.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MONITOR_COLUMNS)
        for r in result.monitors:
            w.writerow([r["step"]] + [repr(float(r[c])) for c in MONITOR_COLUMNS[1:]])
    files["monitors"] = str(p)
    if result.flux:
        p = out / "flux.csv"
        write_flux_csv(p, result.flux)
        files["flux"] = str(p)
    if marker_rows:
        p = out / "markers.csv"
        write_marker_csv(p, marker_rows)
        files["markers"] = str(p)
    if result.transport:
        p = out / "transport_error.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", "max_rel_error", "sup_other_family"])
            for r in result.transport:
                w.writerow([r[0], repr(float(r[1])), repr(float(r[2])), repr(float(r[3]))])
        files["transport"] = str(p)
    if result.scatter is not None:
        p = out / "scattering.csv"
        write_scattering_csv(p, result.scatter)
        files["scattering"] = str(p)
    p = out / "checkpoint_final.bin"
    write_checkpoint(p, result.state)
    files["checkpoints"] = checkpoints + [str(p)]
    summary = result.summary()
    summary["files"] = files
    write_json(out / "summary.json", summary)
    (out / "config.txt").write_text(result.config.to_text())
