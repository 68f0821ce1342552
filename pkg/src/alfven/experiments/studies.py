"""Multi-run studies.  Each pass/fail check names the acceptance criterion it tests."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..diagnostics import DiagnosticsRecorder
from ..geometry import CharacteristicFrame, FrameComponent
from ..grid import Grid3
from ..initial_data import InitialDataSpec, make_initial_data
from ..io import write_json
from ..scattering import linearization_deviation
from ..solver import (DissipationIntegral, ElsasserState, SolverConfig, Stepper, classify_regime, dispersion,
                      linearized_mode_fit)
from .config import ConfigError, RunConfig, decay_horizon
from .runner import simulate

log = logging.getLogger(__name__)

__all__ = ["Check", "StudyReport", "viscous_compare", "lockstep_deviation", "decay_study", "dispersion_study",
           "scatter_study", "rough_decay_envelope"]


@dataclass
class Check:
    criterion: str
    name: str
    value: float
    window: tuple
    passed: bool

    def line(self) -> str:
        lo, hi = self.window
        return (f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.criterion}: {self.name} = {self.value:.6g} "
                f"(window [{lo:.6g}, {hi:.6g}])")


def _check(criterion: str, name: str, value: float, lo: float = -math.inf, hi: float = math.inf) -> Check:
    v = float(value)
    return Check(criterion, name, v, (lo, hi), bool(math.isfinite(v) and lo <= v <= hi))


@dataclass
class StudyReport:
    kind: str
    runs: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "runs": self.runs, "fitted": self.fitted,
                "checks": [asdict(c) for c in self.checks], "passed": self.passed}

    def write(self, out_dir) -> Path:
        p = Path(out_dir)
        p.mkdir(parents=True, exist_ok=True)
        path = p / f"{self.kind.replace('-', '_')}_summary.json"
        write_json(path, self.to_dict())
        return path

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


# -- viscous comparison ------------------------------------------------------


def lockstep_deviation(cfg: RunConfig, mus, dt: float) -> dict:
    """Advance identical data at each viscosity side by side.

    Returns per-``mu`` arrays: times, ``||z^mu - z^mu0||^2`` (both families,
    against the first entry of ``mus``) and the energy-identity residual
    series.
    """
    g = cfg.grid()
    base = make_initial_data(cfg.data_spec(), g, mu=0.0, b0=cfg.b0, t_final=cfg.t_final)
    steppers, recs, diss = [], [], []
    for mu in mus:
        st = ElsasserState(g, base.zp_hat.copy(), base.zm_hat.copy(), mu=mu, b0=cfg.b0)
        d = DissipationIntegral(mu)
        steppers.append(Stepper(st, SolverConfig(dt=dt, cfl_max=cfg.cfl_max,
                                                 alfven_in_factor=cfg.alfven_in_factor), [d]))
        diss.append(d)
        recs.append(DiagnosticsRecorder(cfg.weight(), K=0, mu=mu, dissipation=(lambda d=d: d.total), weighted=False))
    n = int(round(cfg.t_final / dt))
    cadence = max(1, int(round(cfg.cadence * cfg.dt / dt)))
    times, devs = [], [[] for _ in mus]

    def observe(step):
        ref = steppers[0].state
        times.append(ref.t)
        for i, s in enumerate(steppers):
            st = s.state
            devs[i].append(g.spectral_norm2(st.zp_hat - ref.zp_hat) + g.spectral_norm2(st.zm_hat - ref.zm_hat))
            recs[i].record(step, st, None)

    observe(0)
    for k in range(1, n + 1):
        for s in steppers:
            s.step()
        if k % cadence == 0 or k == n:
            observe(k)
    return {"t": np.asarray(times), "deviation": [np.asarray(d) for d in devs],
            "residual": [r.series.identity_residuals() for r in recs], "states": [s.state for s in steppers]}


def viscous_compare(cfg: RunConfig, mu_list=None, dt_list=None) -> StudyReport:
    """``sup_t ||z^mu - z||^2`` for viscosities in ratio 2, with a dt-refinement check.

    Also reports the unweighted energy-identity residual of each run and its
    reduction under dt halving.
    """
    mus = list(cfg.mu_list if mu_list is None else mu_list)
    if 0.0 not in mus:
        raise ConfigError("viscous-compare needs mu = 0 in mu_list")
    pos = sorted(m for m in mus if m > 0)
    if len(pos) < 2:
        raise ConfigError("viscous-compare needs at least two positive viscosities")
    for a, b in zip(pos, pos[1:]):
        if abs(b / a - 2.0) > 1e-9:
            raise ConfigError("positive viscosities must be in ratio 2")
    order = [0.0] + pos
    dts = [cfg.dt] + [d for d in (cfg.dt_list if dt_list is None else dt_list) if d != cfg.dt]
    eps = cfg.amplitude
    rep = StudyReport("viscous-compare")
    quotients = {}
    residuals = {}
    for dt in dts:
        res = lockstep_deviation(cfg, order, dt)
        dev = {mu: float(np.max(d)) for mu, d in zip(order, res["deviation"])}
        resid = {mu: float(np.max(r)) for mu, r in zip(order, res["residual"])}
        q = {mu: dev[mu] / (mu * eps * math.exp(eps * cfg.t_final)) for mu in pos}
        quotients[dt] = q
        residuals[dt] = resid
        for mu in order:
            rep.runs.append({"dt": dt, "mu": mu, "sup_deviation_sq": dev[mu], "energy_identity_residual": resid[mu],
                             "bound_quotient": q.get(mu)})
        ratios = [dev[b] / dev[a] for a, b in zip(pos, pos[1:])]
        rep.fitted[f"ratios_dt{dt:g}"] = ratios
        if dt == cfg.dt:
            for a, b, r in zip(pos, pos[1:], ratios):
                rep.checks.append(_check("7", f"sup dev^2(mu={b:g}) / sup dev^2(mu={a:g})", r, 1.6, 2.4))
            for mu in (0.0, pos[-1]) if len(pos) else (0.0,):
                rep.checks.append(_check("1", f"energy identity residual mu={mu:g} dt={dt:g}", resid[mu], 0.0, 1e-6))
    if len(dts) > 1:
        d0, d1 = dts[0], dts[1]
        for mu in pos:
            qr = quotients[d1][mu] / quotients[d0][mu]
            rep.fitted[f"quotient_change_mu{mu:g}"] = qr
            rep.checks.append(_check("7", f"bound quotient change under dt refinement mu={mu:g}", qr, 0.8, 1.2))
        for mu in (0.0, pos[-1]):
            r0, r1 = residuals[d0][mu], residuals[d1][mu]
            ratio = r0 / r1 if r1 > 0 else math.inf
            rep.fitted[f"residual_reduction_mu{mu:g}"] = ratio
            rep.checks.append(_check("1", f"residual reduction dt {d0:g} -> {d1:g} mu={mu:g}", ratio, 12.0, 20.0))
    return rep


# -- decay study -------------------------------------------------------------


def rough_decay_envelope(t, mu: float) -> np.ndarray:
    """``log(log(mu t + e) + e) / log(mu t + e)``, equal to 1 at ``t = 0``."""
    x = np.log(mu * np.asarray(t, float) + math.e)
    return np.log(x + math.e) / x / math.log(1 + math.e)


def _decay_run(cfg: RunConfig, family: str, dims, box, T: float):
    g = Grid3(tuple(dims), tuple(box))
    spec = InitialDataSpec(family=family, amplitude=cfg.amplitude, seed=cfg.seed,
                           envelope_scale=cfg.envelope_scale, band=tuple(cfg.band))
    st = make_initial_data(spec, g, mu=cfg.mu, b0=cfg.b0, t_final=T)
    frame = FrameComponent(CharacteristicFrame.initial(g, b0=cfg.b0)) if cfg.weighted else None
    diss = DissipationIntegral(cfg.mu)
    comps = [diss] + ([frame] if frame is not None else [])
    stepper = Stepper(st, SolverConfig(dt=cfg.dt, cfl_max=cfg.cfl_max), comps)
    rec = DiagnosticsRecorder(cfg.weight(), K=cfg.K, mu=cfg.mu, dissipation=lambda: diss.total,
                              weighted=frame is not None)
    n = int(round(T / cfg.dt))
    rec.record(0, stepper.state, frame.sync(0.0) if frame else None)
    for k in range(1, n + 1):
        stepper.step()
        if k % cfg.cadence == 0 or k == n:
            rec.record(k, stepper.state, frame.sync(stepper.state.t) if frame else None)
    return rec.series


def decay_study(cfg: RunConfig, out_dir=None) -> StudyReport:
    """Matched-energy low-frequency and oscillatory data, run to ``1/(4 mu)``.

    Dissipated fraction ``1 - E0(t)/E0(0)`` of each family, their ratio, the
    first time the ``H^2`` size ``(E0+E1+E2)^(1/2)`` falls below
    ``eps_mu = c_par mu``, and a table of the total energy against the
    rough-decay envelope.
    """
    T = decay_horizon(cfg)
    rep = StudyReport("decay-study")
    series = {}
    for fam, dims, box in (("low_frequency", cfg.decay_dims_low, cfg.decay_box_low),
                           ("oscillatory", cfg.decay_dims_osc, cfg.decay_box_osc)):
        S = _decay_run(cfg, fam, dims, box, T)
        series[fam] = S
        e0 = np.array([s[0] for s in S.sobolev])
        h2 = np.array([math.sqrt(s[0] + s[1] + s[2]) for s in S.sobolev])
        frac = 1.0 - e0[-1] / e0[0]
        eps_mu = cfg.c_par * cfg.mu
        below = np.nonzero(h2 <= eps_mu)[0]
        rep.runs.append({"family": fam, "dims": list(dims), "box": list(box), "T": T, "mu": cfg.mu,
                         "E0_initial": float(e0[0]), "E0_final": float(e0[-1]), "dissipated_fraction": float(frac),
                         "parabolic_threshold": eps_mu,
                         "parabolic_time": float(S.t[below[0]]) if len(below) else None})
    f_low = rep.runs[0]["dissipated_fraction"]
    f_osc = rep.runs[1]["dissipated_fraction"]
    ratio = f_osc / f_low if f_low > 0 else math.inf
    rep.fitted.update(fraction_low=f_low, fraction_osc=f_osc, ratio=ratio)
    if cfg.mu > 0:
        rep.checks.append(_check("9", "oscillatory / low-frequency dissipated fraction", ratio, 2.0))
        if cfg.amplitude <= 0.01:
            rep.checks.append(_check("9", "low-frequency dissipated fraction", f_low, -math.inf, 0.2))
    if out_dir is not None:
        p = Path(out_dir)
        p.mkdir(parents=True, exist_ok=True)
        with open(p / "decay.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["family", "t", "E0", "Etotal_mu", "Etotal_mu_normalized", "rough_envelope"])
            for fam, S in series.items():
                env = rough_decay_envelope(S.t, cfg.mu) if cfg.mu > 0 else np.ones(len(S.t))
                e_tot = np.asarray(S.Etotal_mu, float)
                norm = e_tot / e_tot[0] if e_tot[0] > 0 else e_tot
                for i in range(len(S.t)):
                    w.writerow([fam, repr(float(S.t[i])), repr(float(S.sobolev[i][0])), repr(float(e_tot[i])),
                                repr(float(norm[i])), repr(float(env[i]))])
    return rep


# -- dispersion --------------------------------------------------------------


def dispersion_study(cfg: RunConfig, mu_list=None, modes=None, out_dir=None) -> StudyReport:
    """Fitted against analytic plane-wave frequencies for every (mu, xi) pair."""
    mus = list(cfg.mu_list if mu_list is None else mu_list)
    xis = [tuple(x) for x in (cfg.modes if modes is None else modes)]
    rep = StudyReport("dispersion")
    seen = set()
    for mu in mus:
        for xi in xis:
            T = cfg.mode_T
            rate = mu * float(np.dot(xi, xi))
            if rate > 0:
                T = min(T, 20.0 / rate)
            fit = linearized_mode_fit(xi, mu, cfg.b0, T=T)
            case = classify_regime(xi, mu, cfg.b0)
            seen.add(case)
            a, b = dispersion(xi, mu, cfg.b0)
            rep.runs.append({"mu": mu, "xi": list(xi), "case": case, "expected": [[a.real, a.imag], [b.real, b.imag]],
                             "fitted": [[f.real, f.imag] for f in fit.frequencies],
                             "frequency": fit.frequency, "damping": fit.damping, "rel_error": fit.rel_error})
            rep.checks.append(_check("3", f"relative error mu={mu:g} xi={xi} (case {case})", fit.rel_error, 0.0, 1e-6))
    rep.fitted["cases_covered"] = sorted(seen)
    rep.checks.append(_check("3", "number of regimes covered", len(seen), 3, 3))
    if out_dir is not None:
        p = Path(out_dir)
        p.mkdir(parents=True, exist_ok=True)
        with open(p / "dispersion.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "xi1", "xi2", "xi3", "case", "freq_analytic", "damping_analytic",
                        "freq_fitted", "damping_fitted", "rel_error"])
            for r in rep.runs:
                w.writerow([repr(r["mu"])] + [repr(float(x)) for x in r["xi"]] + [r["case"],
                           repr(abs(r["expected"][0][0])), repr(-r["expected"][0][1]),
                           repr(r["frequency"]), repr(r["damping"]), repr(r["rel_error"])])
    return rep


# -- scattering --------------------------------------------------------------


def scatter_study(cfg: RunConfig, out_dir=None) -> StudyReport:
    """Ideal runs at each amplitude; identity residuals and the quadratic deviation law."""
    if cfg.mu != 0:
        raise ConfigError("scatter needs mu = 0 (the scattering map is an ideal-flow object)")
    amps = list(cfg.amplitudes)
    if not amps:
        raise ConfigError("scatter needs at least one amplitude")
    stride = cfg.marker_stride or 4
    omega = 1.0 + cfg.delta
    rep = StudyReport("scatter")
    records = []
    for i, a in enumerate(amps):
        sub = None if out_dir is None else Path(out_dir) / f"amplitude_{i}"
        rc = cfg.with_(amplitude=a, scatter=True, marker_stride=stride, weighted=False, frame=False)
        res = simulate(rc, sub, write=sub is not None)
        if not res.ok:
            raise RuntimeError(f"scatter run at amplitude {a:g} stopped: {res.message}")
        records.append(res.scatter)
        rep.runs.append({"amplitude": a, "identity_residual": res.identity, "tail_fit_omega": res.scatter.omega_fit,
                         "status": res.scatter.status, "dir": None if sub is None else str(sub)})
        if i == 0:
            rep.checks.append(_check("6", f"along-line identity residual (z and curl z) at amplitude {a:g}",
                                     res.identity["max"], 0.0, 1e-3))
    lin = linearization_deviation(None, amps, R=cfg.R, omega=omega, records=records)
    rep.fitted.update(deviations=lin.deviations, tails=lin.tails, exponent=lin.exponent, ratios=lin.ratios)
    if len(amps) >= 2:
        rep.checks.append(_check("8", f"d({amps[0]:g}) / d({amps[1]:g})", lin.ratios[0], 3.5, 4.5))
        frac = lin.tails[0] / lin.deviations[0] if lin.deviations[0] > 0 else math.inf
        rep.fitted["tail_fraction"] = frac
        rep.checks.append(_check("8", "tail estimate / d(eps)", frac, 0.0, 0.1))
    return rep
