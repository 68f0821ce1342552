"""Invariant suite on small canned configurations.

Every check is identified as ``module:identifier``.  The suite is
deterministic: the same seed gives bit-identical ``verify.csv`` output.
"""
from __future__ import annotations

import csv
import filecmp
import math
import tempfile
import time
from pathlib import Path

import numpy as np

from .. import grid as gf
from ..diagnostics import DiagnosticsRecorder, FluxAccumulator, div_curl_check
from ..geometry import (CharacteristicFrame, FrameComponent, MarkerCloud, MarkerComponent, WeightMode,
                        jacobian_ansatz_report, normal_product, separation_report)
from ..grid import Grid3
from ..initial_data import InitialDataSpec, make_initial_data
from ..scattering import LineRecords, ScatteringComponent, characteristic_identity_residual
from ..solver import DissipationIntegral, ElsasserState, SolverConfig, Stepper, linearized_mode_fit
from .config import ConfigError, ContractError, parse_config
from .runner import simulate
from .studies import Check, StudyReport

__all__ = ["verify", "write_verify_csv"]

TOL = 1e-12


def _rel(a, b) -> float:
    den = float(np.max(np.abs(b)))
    return float(np.max(np.abs(a - b))) / (den if den > 0 else 1.0)


def _band_field(g: Grid3, rng, ncomp: int = 3, frac: int = 3) -> np.ndarray:
    shape = ((ncomp,) if ncomp > 1 else ()) + g.spectral_shape
    fh = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    keep = [np.abs(n) <= d // frac for n, d in zip(g.index, g.dims)]
    fh = fh * (keep[0] & keep[1] & keep[2])
    return g.ifft(fh)


class _Suite:
    def __init__(self, report: StudyReport):
        self.report = report

    def add(self, ident: str, value: float, hi: float, lo: float = -math.inf) -> None:
        v = float(value)
        self.report.checks.append(Check("10", ident, v, (lo, hi), bool(math.isfinite(v) and lo <= v <= hi)))

    def flag(self, ident: str, ok: bool) -> None:
        self.report.checks.append(Check("10", ident, 1.0 if ok else 0.0, (1.0, 1.0), bool(ok)))


def _trivial(s: _Suite) -> None:
    g = Grid3((8, 8, 8))
    z = ElsasserState.zeros(g)
    st = Stepper(z, SolverConfig(dt=0.1))
    for _ in range(3):
        st.step()
    s.add("elsasser_solver:zero_state_stays_zero", max(st.state.max_abs()), 0.0)
    c = np.full(g.shape, 2.5)
    ch = g.fft(c)
    s.add("grid_fields:constant_mass_at_k0", float(np.abs(ch).sum() - abs(ch[0, 0, 0])), 0.0)
    s.add("grid_fields:gradient_of_constant", float(np.abs(gf.gradient(g, c)).max()), TOL)
    fr = CharacteristicFrame.initial(g)
    s.add("characteristic_geometry:zero_data_normal_product", float(np.abs(normal_product(fr, z, 1) - math.sqrt(2)).max()), TOL)
    rec = LineRecords.start(z, MarkerCloud.lattice(g, 4).labels)
    s.add("scattering:zero_data_accumulators", float(np.abs(rec.gradp[1]).max() + np.abs(rec.gradp[-1]).max()), 0.0)


def _grid_fields(s: _Suite, rng) -> None:
    g = Grid3((32, 32, 32), (2 * np.pi, 4.0, 2 * np.pi))
    f = rng.standard_normal((3,) + g.shape)
    s.add("grid_fields:round_trip", _rel(g.ifft(g.fft(f)), f), TOL)
    s.add("grid_fields:parseval", abs(g.spectral_norm2(g.fft(f)) / g.norm2(f) - 1.0), TOL)
    v = _band_field(g, rng)
    sc = _band_field(g, rng, 1)
    s.add("grid_fields:div_curl_zero", float(np.abs(gf.divergence(g, gf.curl(g, v))).max() / np.abs(gf.curl(g, v)).max()), TOL)
    s.add("grid_fields:curl_grad_zero", float(np.abs(gf.curl(g, gf.gradient(g, sc))).max() / np.abs(gf.gradient(g, sc)).max()), TOL)
    s.add("grid_fields:div_grad_is_laplacian", _rel(gf.divergence(g, gf.gradient(g, sc)), gf.laplacian(g, sc)), TOL)
    p = gf.leray_project(g, v)
    s.add("grid_fields:leray_idempotent", _rel(gf.leray_project(g, p), p), TOL)
    s.add("grid_fields:leray_divergence_free", float(np.abs(gf.divergence(g, p)).max() / np.abs(p).max()), 1e-10)
    s.add("grid_fields:leray_of_gradient", float(np.abs(gf.leray_project(g, gf.gradient(g, sc))).max() / np.abs(gf.gradient(g, sc)).max()), TOL)
    # dealiased product against a zero-padded exact product
    a = _band_field(g, rng, 1, 6)
    b = _band_field(g, rng, 1, 6)
    prod = gf._dealiased(g, a * b, True)
    big = Grid3(tuple(2 * n for n in g.dims), g.box)
    pad = lambda x: _pad(g, big, g.fft(x))
    exact = big.ifft(pad(a) * 0 + big.fft(big.ifft(pad(a)) * big.ifft(pad(b))))
    exact = exact[::2, ::2, ::2]
    s.add("grid_fields:dealiased_product_exact", _rel(prod, exact), 1e-11)


def _pad(g: Grid3, big: Grid3, fh: np.ndarray) -> np.ndarray:
    out = np.zeros(big.spectral_shape, complex)
    n1, n2, _ = g.dims
    h1, h2 = n1 // 2, n2 // 2
    m3 = fh.shape[-1]
    scale = big.npoints / g.npoints
    for s1 in (slice(0, h1), slice(-h1, None)):
        for s2 in (slice(0, h2), slice(-h2, None)):
            out[s1, s2, :m3 - 1] = fh[s1, s2, :m3 - 1] * scale
    return out


def _solver(s: _Suite) -> None:
    g = Grid3((32, 32, 32), (8 * np.pi,) * 3)
    st0 = make_initial_data(InitialDataSpec("bump", 0.01, sides="plus"), g)
    T, dt = 2.0, 0.05
    stp = Stepper(st0.copy(), SolverConfig(dt=dt))
    stp.run(T)
    exact = g.ifft(st0.zp_hat * np.exp(1j * g.k[2] * T))
    s.add("elsasser_solver:decoupled_transport", _rel(stp.state.z_plus, exact) * np.abs(exact).max() / 0.01, 1e-6)
    s.add("elsasser_solver:decoupled_other_family", stp.state.max_abs()[1], 1e-12)
    fit = linearized_mode_fit((0, 0, 1), 0.0, 1.0, T=1.0)
    s.add("elsasser_solver:dispersion_case1", fit.rel_error, 1e-6)
    fit = linearized_mode_fit((2, 0, 0), 0.05, 1.0, T=1.0)
    s.add("elsasser_solver:dispersion_pure_damping", abs(fit.damping - 0.2) / 0.2, 1e-6)
    st = make_initial_data(InitialDataSpec("random_band", 0.01, band=(0.0, 3.0), seed=1), g, mu=0.01)
    d = DissipationIntegral(0.01)
    stp = Stepper(st, SolverConfig(dt=0.05), [d])
    rec = DiagnosticsRecorder(WeightMode(), K=0, mu=0.01, dissipation=lambda: d.total, weighted=False)
    rec.record(0, stp.state, None)
    for n in range(1, 41):
        stp.step()
        if n % 10 == 0:
            rec.record(n, stp.state, None)
    s.add("energy_diagnostics:energy_identity", float(np.max(rec.series.identity_residuals())), 1e-6)
    div = float(np.abs(g.ifft(g.div_hat(stp.state.zp_hat))).max() / max(stp.state.max_abs()))
    s.add("elsasser_solver:divergence_free_after_steps", div, 1e-10)


def _geometry_and_energy(s: _Suite) -> None:
    g = Grid3((32, 32, 32), (8 * np.pi,) * 3)
    # decoupled: weighted energy of z+ is transported without change
    st0 = make_initial_data(InitialDataSpec("bump", 0.01, sides="plus"), g)
    fr = FrameComponent(CharacteristicFrame.initial(g))
    mc = MarkerComponent(MarkerCloud.lattice(g, 4))
    stp = Stepper(st0.copy(), SolverConfig(dt=0.1), [fr, mc])
    rec = DiagnosticsRecorder(WeightMode(), K=1, mu=0.0)
    acc = FluxAccumulator(1, [0.0, 1.0], density="unit")
    rec.record(0, stp.state, fr.sync(0.0))
    acc.accumulate(stp.state, fr.sync(0.0))
    n = 20
    for k in range(1, n + 1):
        stp.step()
        if k % 5 == 0:
            f = fr.sync(stp.state.t)
            rec.record(k, stp.state, f)
            acc.accumulate(stp.state, f)
    S = rec.series
    ch = max(abs(S.E_plus[-1] / S.E_plus[0] - 1), max(abs(a / b - 1) for a, b in zip(S.E_plus_k[-1], S.E_plus_k[0])))
    s.add("energy_diagnostics:weighted_conservation_decoupled", ch, 1e-6)
    T = stp.state.t
    # z- = 0 leaves the + hypersurfaces flat; the unit flux measures sqrt(2) L1 L2 T
    unit = float(np.max(np.abs(acc.flux[:, 0] / (math.sqrt(2) * g.box[0] * g.box[1] * T) - 1)))
    s.add("energy_diagnostics:flux_measure_sqrt2", unit, 1e-6)
    f = fr.sync(T)
    rep = separation_report(f, T, stp.state)
    s.flag("characteristic_geometry:separation_bounds", rep.bound_ok)
    jd, dd = jacobian_ansatz_report(mc.sync(T))
    s.add("characteristic_geometry:det_jacobian", dd, 1e-4)
    rng = np.random.default_rng(3)
    x1, x2, x3 = g.coords
    for name, lam in (("constant", np.ones(g.shape)),
                      ("quadratic", np.broadcast_to(1 + 0.05 * (x1**2 + x2**2 + x3**2), g.shape)),
                      ("weight_hybrid", np.broadcast_to(np.log(np.sqrt(100.0**2 + x1**2 + x2**2 + x3**2)) ** 4, g.shape))):
        r = div_curl_check(g, _band_field(g, rng), lam)
        s.flag(f"energy_diagnostics:div_curl_{name}", r.ok)


def _scattering(s: _Suite, mutate: bool) -> None:
    # decoupled: lines land on nodes when b0 T is a multiple of h3, so the identity is exact
    g = Grid3((16, 16, 16), (8 * np.pi,) * 3)
    st0 = make_initial_data(InitialDataSpec("bump", 0.01, sides="plus"), g)
    cl = MarkerCloud.lattice(g, 4)
    mc = MarkerComponent(cl)
    sc = ScatteringComponent(LineRecords.start(st0, cl.labels))
    T = 2 * g.spacing[2]
    stp = Stepper(st0.copy(), SolverConfig(dt=T / 400), [mc, sc])
    stp.run(T)
    res = characteristic_identity_residual(sc.sync(stp.state.t), stp.state, mc.sync(stp.state.t))
    s.add("scattering:decoupled_identity", res["max"], 1e-8)
    cfg = parse_config("dims = 32\nt_final = 3\ndt = 0.05\ncadence = 10\nweighted = false\nframe = false\n"
                       f"marker_stride = 4\nscatter = true\nmutate_pressure_sign = {str(mutate).lower()}\n")
    r = simulate(cfg, write=False)
    s.add("scattering:coupled_identity_32", r.identity["max"], 2e-3)


def _experiments(s: _Suite, seed: int) -> None:
    bad = "dims = 16\nt_final = 20\n"  # travel 20.2 > 0.4 * 8 pi
    try:
        parse_config(bad)
        s.flag("experiments_cli:contract_rejected", False)
    except ContractError:
        s.flag("experiments_cli:contract_rejected", True)
    try:
        parse_config("dims = 15\n")
        s.flag("experiments_cli:invalid_grid_rejected", False)
    except ConfigError:
        s.flag("experiments_cli:invalid_grid_rejected", True)
    text = (f"dims = 16\nfamily = random_band\nband = 0, 2\nseed = {seed}\nt_final = 1\ndt = 0.05\n"
            "cadence = 5\nmarker_stride = 4\nflux_levels = 0\nK = 1\n")
    cfg = parse_config(text)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a", Path(tmp) / "b"
        simulate(cfg, a)
        simulate(cfg, b)
        same = all(filecmp.cmp(a / n, b / n, shallow=False)
                   for n in ("diagnostics.csv", "monitors.csv", "flux.csv", "checkpoint_final.bin"))
    s.flag("experiments_cli:bit_reproducible", same)


def verify(seed: int = 0, mutate_pressure_sign: bool = False, trivial_only: bool = False) -> StudyReport:
    """Run the invariant suite; ``trivial_only`` runs the zero-data subset."""
    rep = StudyReport("verify")
    s = _Suite(rep)
    t0 = time.perf_counter()
    _trivial(s)
    if not trivial_only:
        rng = np.random.default_rng(seed)
        _grid_fields(s, rng)
        _solver(s)
        _geometry_and_energy(s)
        _scattering(s, mutate_pressure_sign)
        _experiments(s, seed)
    rep.fitted["wall_seconds"] = time.perf_counter() - t0
    return rep


def write_verify_csv(path, report: StudyReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "check", "value", "lo", "hi", "passed"])
        for c in report.checks:
            w.writerow([c.criterion, c.name, repr(c.value), repr(c.window[0]), repr(c.window[1]), int(c.passed)])
