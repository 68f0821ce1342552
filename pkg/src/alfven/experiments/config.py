"""Flat ``key = value`` run configuration.

One file describes one run or one study.  Lines are ``key = value``; ``#``
starts a comment.  Tuples and lists are comma separated, lists of modes are
``;`` separated triples.  Float values accept multiples of ``pi`` such as
``8*pi``.  Every key, its type and its default are listed in :data:`KEYS`
(``alfven-experiments keys`` prints the table).

The no-wrap contract ``t_final |B0| (1 + amplitude/|B0|) <= margin L3`` is
checked when the file is parsed, so contract-violating runs never start.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..geometry import WeightMode
from ..grid import Grid3
from ..initial_data import FAMILIES, InitialDataSpec
from ..solver import SolverConfig

__all__ = ["RunConfig", "ConfigError", "ContractError", "parse_config", "load_config", "KEYS", "format_keys",
           "decay_horizon"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class ContractError(ConfigError):
    """Configuration violates the no-wrap run contract."""


# name: (kind, default, description)
KEYS: dict[str, tuple[str, object, str]] = {
    # grid
    "dims": ("int3", (32, 32, 32), "grid nodes per axis (even, >= 8)"),
    "box": ("float3", (8 * math.pi,) * 3, "box lengths L1, L2, L3"),
    # data
    "family": ("str", "bump", "data family: " + ", ".join(FAMILIES)),
    "amplitude": ("float", 0.01, "eps: sup norm (bump, random_band, single_mode) or sqrt(E0) (low_frequency, oscillatory)"),
    "seed": ("int", 0, "random seed for the data families"),
    "envelope_scale": ("float", 2.5, "low_frequency: support radius in the variable eps*x"),
    "band": ("float2", (0.97, 1.03), "oscillatory / random_band: |k| window"),
    "mode": ("int3", (0, 0, 1), "single_mode: integer mode index"),
    "sides": ("str", "both", "which Elsasser fields carry data: both, plus, minus"),
    "sigma": ("float", 2.0, "bump: Gaussian width"),
    "center_plus": ("float3", (0.0, 0.0, 0.0), "bump: centre of the z+ bump"),
    "center_minus": ("float3", (0.0, 0.0, 0.0), "bump: centre of the z- bump"),
    "checkpoint_path": ("str", "", "custom_checkpoint: file to load"),
    # physics and time stepping
    "mu": ("float", 0.0, "viscosity = resistivity"),
    "b0": ("float", 1.0, "|B0| (background field along e3)"),
    "dt": ("float", 0.01, "time step"),
    "t_final": ("float", 1.0, "final time"),
    "cfl_max": ("float", 1.0, "CFL limit on max|Z| dt / h"),
    "alfven_in_factor": ("bool", False, "treat the B0 transport exactly in the integrating factor"),
    "contract_margin": ("float", 0.4, "no-wrap contract: allowed travel as a fraction of L3"),
    # diagnostics
    "cadence": ("int", 10, "record diagnostics every this many steps"),
    "K": ("int", 2, "derivative budget for the weighted energies"),
    "weighted": ("bool", True, "compute weighted energies (needs the characteristic frame)"),
    "frame": ("bool", True, "evolve the characteristic coordinates"),
    "weight_mode": ("str", "hybrid_log", "hybrid_log or ideal_power"),
    "R": ("float", 100.0, "weight offset R"),
    "delta": ("float", 0.1, "omega = 1 + delta"),
    "marker_stride": ("int", 0, "markers on every stride-th node per axis (0 = off)"),
    "marker_dump": ("bool", False, "write the marker trajectory CSV"),
    "flux_levels": ("floats", (), "levels c of the hypersurfaces u = c for fluxes"),
    "flux_orders": ("ints", (), "derivative orders added to the flux integrand"),
    "flux_measure": ("str", "characteristic", "characteristic or graph surface element"),
    "flux_density": ("str", "weighted", "weighted or unit integrand"),
    "scatter": ("bool", False, "accumulate grad p and the wedge term along the marker lines"),
    "scatter_accuracy": ("float", 0.0, "warn when the scattering tail estimate exceeds this (0 = off)"),
    "checkpoint_every": ("int", 0, "checkpoint every this many steps (0 = final only)"),
    # studies
    "mu_list": ("floats", (0.0, 0.005, 0.01), "viscous-compare / decay-study viscosities"),
    "dt_list": ("floats", (), "viscous-compare: extra time steps for the refinement check"),
    "modes": ("modes", ((0, 0, 1), (1, 0, 1), (1, 0, 0)), "dispersion: wavevectors xi"),
    "mode_T": ("float", 1.0, "dispersion: fit horizon"),
    "amplitudes": ("floats", (0.01, 0.005), "scatter: amplitudes for the linearization check"),
    "decay_dims_low": ("int3", (48, 48, 48), "decay-study: grid of the low-frequency run"),
    "decay_box_low": ("float3", (640.0, 640.0, 640.0), "decay-study: box of the low-frequency run"),
    "decay_dims_osc": ("int3", (32, 32, 32), "decay-study: grid of the oscillatory run"),
    "decay_box_osc": ("float3", (40.0, 40.0, 40.0), "decay-study: box of the oscillatory run"),
    "c_par": ("float", 1.0, "decay-study: parabolic threshold eps_mu = c_par * mu"),
    # bookkeeping
    "out": ("str", "out", "output directory"),
    "threads": ("int", 1, "FFT threads"),
    "mutate_pressure_sign": ("bool", False, "test hook: flip the sign of grad p seen by the line accumulators"),
}


@dataclass(frozen=True)
class RunConfig:
    dims: tuple = KEYS["dims"][1]
    box: tuple = KEYS["box"][1]
    family: str = "bump"
    amplitude: float = 0.01
    seed: int = 0
    envelope_scale: float = 2.5
    band: tuple = (0.97, 1.03)
    mode: tuple = (0, 0, 1)
    sides: str = "both"
    sigma: float = 2.0
    center_plus: tuple = (0.0, 0.0, 0.0)
    center_minus: tuple = (0.0, 0.0, 0.0)
    checkpoint_path: str = ""
    mu: float = 0.0
    b0: float = 1.0
    dt: float = 0.01
    t_final: float = 1.0
    cfl_max: float = 1.0
    alfven_in_factor: bool = False
    contract_margin: float = 0.4
    cadence: int = 10
    K: int = 2
    weighted: bool = True
    frame: bool = True
    weight_mode: str = "hybrid_log"
    R: float = 100.0
    delta: float = 0.1
    marker_stride: int = 0
    marker_dump: bool = False
    flux_levels: tuple = ()
    flux_orders: tuple = ()
    flux_measure: str = "characteristic"
    flux_density: str = "weighted"
    scatter: bool = False
    scatter_accuracy: float = 0.0
    checkpoint_every: int = 0
    mu_list: tuple = (0.0, 0.005, 0.01)
    dt_list: tuple = ()
    modes: tuple = ((0, 0, 1), (1, 0, 1), (1, 0, 0))
    mode_T: float = 1.0
    amplitudes: tuple = (0.01, 0.005)
    decay_dims_low: tuple = (48, 48, 48)
    decay_box_low: tuple = (640.0, 640.0, 640.0)
    decay_dims_osc: tuple = (32, 32, 32)
    decay_box_osc: tuple = (40.0, 40.0, 40.0)
    c_par: float = 1.0
    out: str = "out"
    threads: int = 1
    mutate_pressure_sign: bool = False

    # -- derived objects ---------------------------------------------------

    @property
    def nsteps(self) -> int:
        return int(round(self.t_final / self.dt))

    def grid(self) -> Grid3:
        return Grid3(tuple(self.dims), tuple(self.box))

    def data_spec(self) -> InitialDataSpec:
        return InitialDataSpec(
            family=self.family, amplitude=self.amplitude, seed=self.seed,
            envelope_scale=self.envelope_scale, band=tuple(self.band), mode=tuple(self.mode),
            sides=self.sides, sigma=self.sigma, center_plus=tuple(self.center_plus),
            center_minus=tuple(self.center_minus), path=self.checkpoint_path or None,
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, cfl_max=self.cfl_max, alfven_in_factor=self.alfven_in_factor,
                            mutate_pressure_sign=self.mutate_pressure_sign)

    def weight(self) -> WeightMode:
        return WeightMode(self.weight_mode, R=self.R, delta=self.delta)

    def with_(self, **kw) -> "RunConfig":
        """Copy with overrides, re-validated."""
        new = replace(self, **kw)
        validate(new)
        return new

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_render(KEYS[f.name][0], getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


# -- parsing -------------------------------------------------------------

_PI = re.compile(r"^\s*([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*pi\s*$")


def _float(tok: str, key: str) -> float:
    tok = tok.strip()
    m = _PI.match(tok)
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * math.pi
    try:
        v = float(tok)
    except ValueError:
        raise ConfigError(f"{key}: {tok!r} is not a number") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key}: value must be finite")
    return v


def _int(tok: str, key: str) -> int:
    try:
        return int(tok.strip())
    except ValueError:
        raise ConfigError(f"{key}: {tok!r} is not an integer") from None


def _bool(tok: str, key: str) -> bool:
    t = tok.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: {tok!r} is not a boolean")


def _items(value: str) -> list[str]:
    return [p for p in (s.strip() for s in value.split(",")) if p]


def _convert(kind: str, value: str, key: str):
    if kind == "str":
        return value.strip()
    if kind == "int":
        return _int(value, key)
    if kind == "float":
        return _float(value, key)
    if kind == "bool":
        return _bool(value, key)
    if kind in ("int3", "float3", "float2"):
        n = 2 if kind == "float2" else 3
        conv = _int if kind == "int3" else _float
        parts = [conv(p, key) for p in _items(value)]
        if len(parts) == 1 and n == 3:
            parts = parts * 3
        if len(parts) != n:
            raise ConfigError(f"{key}: expected {n} comma-separated values, got {len(parts)}")
        return tuple(parts)
    if kind == "floats":
        return tuple(_float(p, key) for p in _items(value))
    if kind == "ints":
        return tuple(_int(p, key) for p in _items(value))
    if kind == "modes":
        out = []
        for chunk in (c.strip() for c in value.split(";")):
            if chunk:
                out.append(_convert("float3", chunk, key))
        return tuple(out)
    raise AssertionError(kind)


def _render(kind: str, v) -> str:
    if kind in ("int3", "float3", "float2", "floats", "ints"):
        return ", ".join(repr(x) for x in v)
    if kind == "modes":
        return "; ".join(", ".join(repr(x) for x in m) for m in v)
    if kind == "bool":
        return "true" if v else "false"
    return str(v) if kind == "str" else repr(v)


def parse_config(text: str, overrides: dict | None = None, kind: str | None = None) -> RunConfig:
    """Parse ``key = value`` text; ``overrides`` replace parsed values.

    ``kind`` names the study the file is used for (``decay-study`` checks
    its own contract); ``None`` means a single run.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(KEYS[key][0], value, key)
    for k, v in (overrides or {}).items():
        if k not in KEYS:
            raise ConfigError(f"unknown override {k!r}")
        values[k] = v
    cfg = RunConfig(**values)
    validate(cfg, kind)
    return cfg


def load_config(path, overrides: dict | None = None, kind: str | None = None) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(p.read_text(), overrides, kind)


def _check_contract(t_final: float, b0: float, amplitude: float, L3: float, margin: float, what: str) -> None:
    travel = t_final * b0 * (1.0 + amplitude / b0)
    if travel > margin * L3 * (1 + 1e-12):
        raise ContractError(
            f"{what}: no-wrap contract violated, t_final*|B0|*(1+amplitude/|B0|) = {travel:.4g} > {margin}*L3 = {margin * L3:.4g}"
        )


def validate(cfg: RunConfig, kind: str | None = None) -> None:
    try:
        Grid3(tuple(cfg.dims), tuple(cfg.box))
        cfg.data_spec()
        cfg.weight()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.family == "custom_checkpoint" and not cfg.checkpoint_path:
        raise ConfigError("family custom_checkpoint needs checkpoint_path")
    if cfg.mu < 0:
        raise ConfigError("mu must be >= 0")
    if not cfg.b0 > 0:
        raise ConfigError("b0 must be positive")
    if cfg.amplitude >= 0.5 * cfg.b0:
        raise ConfigError("amplitude must be small relative to |B0| (< b0/2)")
    if not cfg.dt > 0 or not cfg.t_final > 0:
        raise ConfigError("dt and t_final must be positive")
    if abs(cfg.t_final / cfg.dt - cfg.nsteps) > 1e-8 * max(1, cfg.nsteps):
        raise ConfigError("t_final must be an integer multiple of dt")
    if cfg.cadence < 1 or cfg.K < 0 or cfg.marker_stride < 0 or cfg.checkpoint_every < 0 or cfg.threads < 1:
        raise ConfigError("cadence and threads must be >= 1; K, marker_stride and checkpoint_every >= 0")
    if cfg.flux_measure not in ("characteristic", "graph"):
        raise ConfigError("flux_measure must be characteristic or graph")
    if cfg.flux_density not in ("weighted", "unit"):
        raise ConfigError("flux_density must be weighted or unit")
    if any(k < 1 for k in cfg.flux_orders):
        raise ConfigError("flux_orders must be >= 1")
    if cfg.scatter and cfg.marker_stride == 0:
        raise ConfigError("scatter needs marker_stride > 0 (lines start on the marker lattice)")
    if cfg.flux_levels and not cfg.frame:
        raise ConfigError("fluxes need frame = true")
    if any(m < 0 for m in cfg.mu_list) or any(d <= 0 for d in cfg.dt_list):
        raise ConfigError("mu_list entries must be >= 0 and dt_list entries > 0")
    if any(a < 0 or a >= 0.5 * cfg.b0 for a in cfg.amplitudes):
        raise ConfigError("amplitudes must lie in [0, b0/2)")
    if not 0 < cfg.contract_margin <= 1:
        raise ConfigError("contract_margin must lie in (0, 1]")
    if kind == "decay-study":
        T = decay_horizon(cfg)
        for name, box in (("low-frequency box", cfg.decay_box_low), ("oscillatory box", cfg.decay_box_osc)):
            _check_contract(T, cfg.b0, cfg.amplitude, box[2], cfg.contract_margin, f"decay-study mu={cfg.mu:g}, {name}")
        if abs(T / cfg.dt - round(T / cfg.dt)) > 1e-8 * max(1.0, T / cfg.dt):
            raise ConfigError(f"decay-study: horizon 1/(4 mu) = {T:g} must be a multiple of dt")
        for dims, box in ((cfg.decay_dims_low, cfg.decay_box_low), (cfg.decay_dims_osc, cfg.decay_box_osc)):
            try:
                Grid3(tuple(dims), tuple(box))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    elif kind != "dispersion":
        _check_contract(cfg.t_final, cfg.b0, cfg.amplitude, cfg.box[2], cfg.contract_margin, "run")


def decay_horizon(cfg: RunConfig) -> float:
    """``1/(4 mu)`` for the decay study (``t_final`` when ``mu = 0``)."""
    return 1.0 / (4.0 * cfg.mu) if cfg.mu > 0 else cfg.t_final


def format_keys() -> str:
    w = max(len(k) for k in KEYS)
    rows = [f"{'key'.ljust(w)}  {'type':7s}  default  --  description"]
    for k, (kind, default, doc) in KEYS.items():
        rows.append(f"{k.ljust(w)}  {kind:7s}  {_render(kind, default)}  --  {doc}")
    return "\n".join(rows)
