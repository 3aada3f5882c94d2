"""Command-line runner: YAML config in, CSV datasets and a JSON summary out.

Every artifact carries the library version, the seed, the SHA-256 of the
canonical config and the config itself, so ``spinnoise --config <artifact>``
re-runs it. Exit codes: 0 ok, 1 validation error, 2 runtime error (including
a failed oracle check).
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import experiments as ex
from . import spectra
from . import trajectories as tr
from .params import DeviceParams, power_to_alpha
from .polarization import analyzer_basis
from .spin_system import sample_noise

EXPERIMENTS = ("loci", "tomography", "correlator", "theta_sweep", "power_sweep", "spectrum",
               "oracle_check")
ORACLE_POINTS = ("defaults", "g0", "half_power")
DEFAULT_EDGES = (0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0,
                 2000.0, 5000.0)
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass
class DriveConfig:
    power_pw: float = 4.0
    omega_laser: float | None = None   # ueV; None means the mean QD energy


@dataclass
class BasisConfig:
    theta_deg: float = 0.0
    theta0_deg: float | str = 23.0     # or "auto": extracted from the loci


@dataclass
class SamplingConfig:
    n_overhauser: int = 500
    n_wandering: int = 15


@dataclass
class GridConfig:
    omega_span: float = 20.0           # ueV either side of the mean QD energy
    omega_points: int = 161
    n_tau: int = 1000
    tau_max: float | None = None       # ns; None picks ten correlation times (>= 500 ns)
    thetas: int = ex.THETA_POINTS
    powers: list = field(default_factory=lambda: list(ex.DEFAULT_POWERS))


@dataclass
class SpectrumConfig:
    fit_window: float = 10.0           # half-widths included in the Lorentzian fit
    power_law: bool = True
    self_consistency: bool = True


@dataclass
class OracleConfig:
    n_overhauser: int = 20
    n_wandering: int = 5
    duration_ns: float = 4e5           # per charged sample at the configured power
    points: list = field(default_factory=lambda: list(ORACLE_POINTS))
    tau_edges: list = field(default_factory=lambda: list(DEFAULT_EDGES))
    min_clicks: int = 100000


@dataclass
class OutputConfig:
    dir: str = "out"
    format: str = "csv"                # csv or json for the vector datasets


SECTIONS = {
    "drive": DriveConfig, "basis": BasisConfig, "sampling": SamplingConfig, "grids": GridConfig,
    "spectrum": SpectrumConfig, "oracle": OracleConfig, "output": OutputConfig,
}


@dataclass
class RunConfig:
    experiment: str = "correlator"
    seed: int = 0
    threads: int = 0
    device: DeviceParams = field(default_factory=DeviceParams)
    drive: DriveConfig = field(default_factory=DriveConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    grids: GridConfig = field(default_factory=GridConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "device": self.device.to_dict()}
        for name in SECTIONS:
            d[name] = dataclasses.asdict(getattr(self, name))
        return d

    def canonical(self) -> dict:
        """Everything that determines the artifact bytes (no output dir, no thread count)."""
        d = self.to_dict()
        d["output"] = {"format": self.output.format}
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(_canonical_json(self.canonical()).encode()).hexdigest()

    @property
    def omega_laser(self) -> float:
        w = self.drive.omega_laser
        return self.device.omega_qd_mean if w is None else w


# --- loading / validation ----------------------------------------------------------

def _canonical_json(d) -> str:
    return json.dumps(_jsonable(d), sort_keys=True, separators=(",", ":"))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _coerce(name, value, default):
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, list):
            return [float(v) if not isinstance(v, str) else v for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: invalid value {value!r}", name) from None
    return value


def _section(cls, raw, prefix):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix} must be a mapping", prefix)
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(f"{prefix}.{k}" for k in unknown),
                          f"{prefix}.{unknown[0]}")
    base = cls()
    kw = {}
    for k, v in raw.items():
        default = getattr(base, k)
        kw[k] = v if default is None or v is None else _coerce(f"{prefix}.{k}", v, default)
    return cls(**kw)


def _device(raw) -> DeviceParams:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("device must be a mapping", "device")
    known = {f.name for f in dataclasses.fields(DeviceParams)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(f"device.{k}" for k in unknown),
                          f"device.{unknown[0]}")
    for k, v in raw.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"device.{k}: expected a number, got {v!r}", f"device.{k}")
    try:
        return DeviceParams.from_dict(raw)
    except ValueError as exc:
        msg = str(exc)
        name = next((f for f in sorted(known, key=len, reverse=True) if msg.startswith(f)), None)
        raise ConfigError(f"device.{msg}" if name else msg,
                          f"device.{name}" if name else "device") from None


def _check(cfg: RunConfig) -> RunConfig:
    def bad(fld, msg):
        raise ConfigError(f"{fld}: {msg}", fld)

    if cfg.experiment not in EXPERIMENTS:
        bad("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got {cfg.experiment!r}")
    if cfg.seed < 0:
        bad("seed", "must be >= 0")
    if cfg.threads < 0:
        bad("threads", "must be >= 0")
    if not cfg.drive.power_pw >= 0:
        bad("drive.power_pw", "must be >= 0")
    t0 = cfg.basis.theta0_deg
    if isinstance(t0, str) and t0 != "auto":
        bad("basis.theta0_deg", "must be a number or 'auto'")
    if not isinstance(t0, str):
        cfg.basis.theta0_deg = _coerce("basis.theta0_deg", t0, 0.0)
    for k in ("n_overhauser", "n_wandering"):
        if getattr(cfg.sampling, k) < 1:
            bad(f"sampling.{k}", "must be >= 1")
        if getattr(cfg.oracle, k) < 1:
            bad(f"oracle.{k}", "must be >= 1")
    g = cfg.grids
    if not g.omega_span > 0:
        bad("grids.omega_span", "must be > 0")
    if g.omega_points < 2:
        bad("grids.omega_points", "must be >= 2")
    if g.n_tau < 2:
        bad("grids.n_tau", "must be >= 2")
    if g.tau_max is not None:
        g.tau_max = _coerce("grids.tau_max", g.tau_max, 0.0)
        if not g.tau_max > 0.01:
            bad("grids.tau_max", "must exceed 0.01 ns")
    if g.thetas < 2:
        bad("grids.thetas", "must be >= 2")
    if not g.powers or any(not isinstance(p, float) or p < 0 for p in g.powers):
        bad("grids.powers", "must be a non-empty list of powers >= 0")
    if cfg.experiment == "spectrum" and cfg.spectrum.power_law and len(g.powers) < 3:
        bad("grids.powers", "the power law needs at least 3 powers")
    if not cfg.spectrum.fit_window > 1:
        bad("spectrum.fit_window", "must be > 1")
    o = cfg.oracle
    if not o.duration_ns > 0:
        bad("oracle.duration_ns", "must be > 0")
    unknown = [pt for pt in o.points if pt not in ORACLE_POINTS]
    if unknown or not o.points:
        bad("oracle.points", f"entries must be among {', '.join(ORACLE_POINTS)}")
    e = np.asarray(o.tau_edges, dtype=float)
    if e.size < 2 or np.any(np.diff(e) <= 0) or e[0] < 0 or e[-1] >= o.duration_ns:
        bad("oracle.tau_edges", "must be increasing, >= 0 and shorter than the duration")
    if cfg.output.format not in ("csv", "json"):
        bad("output.format", "must be csv or json")
    return cfg


def _unknown_keys(raw: dict) -> list:
    top = {"experiment", "seed", "threads", "device", *SECTIONS}
    out = sorted(k for k in raw if k not in top)
    nested = dict(SECTIONS, device=DeviceParams)
    for name, cls in nested.items():
        sub = raw.get(name)
        if isinstance(sub, dict):
            known = {f.name for f in dataclasses.fields(cls)}
            out += sorted(f"{name}.{k}" for k in sub if k not in known)
    return out


def config_from_dict(raw: dict | None) -> RunConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping", "")
    unknown = _unknown_keys(raw)
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(unknown), unknown[0])
    base = RunConfig()
    kw = {"device": _device(raw.get("device"))}
    for k in ("experiment", "seed", "threads"):
        if k in raw:
            kw[k] = raw[k] if k == "experiment" else _coerce(k, raw[k], getattr(base, k))
    for name, cls in SECTIONS.items():
        kw[name] = _section(cls, raw.get(name), name)
    return _check(RunConfig(**kw))


def _embedded_config(text: str):
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):])
    return None


def load_config(path) -> RunConfig:
    """Read a YAML config, or the config embedded in a CSV/JSON artifact."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", "config")
    text = path.read_text()
    raw = _embedded_config(text) if text.startswith("# spinnoise") else None
    if raw is None:
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}", "config") from None
        if isinstance(raw, dict) and raw.get("library") == "spinnoise" and "config" in raw:
            raw = raw["config"]
    return config_from_dict(raw)


# --- artifacts ---------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class Writer:
    def __init__(self, cfg: RunConfig, outdir: Path):
        self.cfg = cfg
        self.outdir = outdir
        self.files: list[str] = []
        self.hash = cfg.config_hash()
        self.config_json = _canonical_json(cfg.canonical())

    def header(self) -> dict:
        return {"library": "spinnoise", "version": __version__, "config_sha256": self.hash,
                "seed": self.cfg.seed, "experiment": self.cfg.experiment}

    def table(self, name: str, columns, rows):
        rows = list(rows)
        if self.cfg.output.format == "json":
            obj = dict(self.header(), columns=list(columns),
                       rows=[[_jsonable(v) for v in r] for r in rows],
                       config=json.loads(self.config_json))
            self._write(f"{name}.json", json.dumps(obj, sort_keys=True, indent=1) + "\n")
            return
        lines = [f"# spinnoise {__version__}",
                 f"# experiment: {self.cfg.experiment}",
                 f"# config_sha256: {self.hash}",
                 f"# seed: {self.cfg.seed}",
                 f"# config: {self.config_json}",
                 ",".join(columns)]
        lines += [",".join(_fmt(v) for v in r) for r in rows]
        self._write(f"{name}.csv", "\n".join(lines) + "\n")

    def summary(self, results: dict, status: str = "ok"):
        obj = dict(self.header(), status=status, results=_jsonable(results),
                   artifacts=sorted(self.files), config=json.loads(self.config_json))
        self._write("summary.json", json.dumps(obj, sort_keys=True, indent=2) + "\n", track=False)
        return obj

    def _write(self, fname, text, track=True):
        self.outdir.mkdir(parents=True, exist_ok=True)
        with open(self.outdir / fname, "w", newline="\n") as fh:
            fh.write(text)
        if track:
            self.files.append(fname)


# --- experiments -------------------------------------------------------------------

def _omega_grid(cfg):
    g = cfg.grids
    return cfg.device.omega_qd_mean + np.linspace(-g.omega_span, g.omega_span, g.omega_points)


def _samples(cfg, params=None, n=None):
    p = params or cfg.device
    n_o, n_w = n or (cfg.sampling.n_overhauser, cfg.sampling.n_wandering)
    return sample_noise(p, n_o, n_w, seed=cfg.seed)


def _theta0(cfg):
    t0 = cfg.basis.theta0_deg
    return "auto" if t0 == "auto" else math.radians(t0)


def _tau_grid(cfg):
    g = cfg.grids
    if g.tau_max is None:
        return None
    return np.concatenate([[0.0], np.logspace(-2, np.log10(g.tau_max), g.n_tau - 1)])


def _auto_grid_kw(cfg):
    grid = _tau_grid(cfg)
    if grid is None and cfg.grids.n_tau != ex.N_TAU:
        return "n", cfg.grids.n_tau
    return "grid", grid


def _correlator_tau(cfg, trace_fn):
    """Run ``trace_fn(tau_grid)`` honouring grids.n_tau for automatic grids."""
    kind, val = _auto_grid_kw(cfg)
    if kind == "grid":
        return trace_fn(val)
    first = trace_fn(None)
    return trace_fn(ex.auto_tau_grid(first.tau_corr if not isinstance(first, list)
                                     else first[0].tau_corr, n=val))


def _trace_scalars(t: ex.CorrelatorTrace) -> dict:
    return {"c0_spin": t.c0_spin, "c0_literal": t.c0, "c_inf": t.c_inf, "tau_corr_ns": t.tau_corr,
            "theta_deg": math.degrees(t.theta), "theta0_deg": math.degrees(t.theta0),
            "power_pw": t.power}


def _run_loci(cfg, w, results):
    grid = _omega_grid(cfg)
    loci = ex.conditional_stokes_loci(cfg.device, grid)
    w.table("loci", ("omega_uev", "spin", "s_hv", "s_da", "s_rl"), loci.rows())
    try:
        results["theta0_deg"] = math.degrees(ex.find_symmetry_axes(loci))
    except ValueError as exc:
        warnings.warn(str(exc))
        results["theta0_deg"] = None
    up = loci.stokes["up"][np.abs(grid - cfg.device.omega_qd_mean) <= 3.0]
    if len(up) >= 2:
        un = up / np.linalg.norm(up, axis=1, keepdims=True)
        results["max_rotation_deg_3uev"] = math.degrees(
            float(np.arccos(np.clip(un @ un.T, -1, 1)).max()))


def _run_tomography(cfg, w, results):
    grid = _omega_grid(cfg)
    tom = ex.tomography_sweep(cfg.device, grid, power_to_alpha(cfg.drive.power_pw, cfg.device),
                              _samples(cfg))
    w.table("tomography", ("omega_uev", "i_h", "i_v", "s_hv", "s_da", "s_rl", "polarized_norm"),
            tom.rows())
    k = int(np.argmin(tom.polarized_norm))
    results.update(i_v_peak_uev=float(grid[np.argmax(tom.i_v)]),
                   i_h_dip_uev=float(grid[np.argmin(tom.i_h)]),
                   polarized_norm_min=float(tom.polarized_norm[k]),
                   polarized_norm_min_uev=float(grid[k]))


def _single_correlator(cfg, samples=None, power=None, uniform=False, params=None):
    p = params or cfg.device
    pw = cfg.drive.power_pw if power is None else power
    samples = samples or _samples(cfg, p)

    def fn(grid):
        return ex.correlator(p, cfg.omega_laser, power_to_alpha(pw, p), math.radians(cfg.basis.theta_deg),
                             _theta0(cfg), grid, samples, power=pw, seed=cfg.seed, uniform=uniform)
    return fn(None) if uniform else _correlator_tau(cfg, fn)


def _run_correlator(cfg, w, results):
    t = _single_correlator(cfg)
    w.table("correlator", ("tau_ns", "c", "g2"), t.rows())
    results.update(_trace_scalars(t))


def _run_theta_sweep(cfg, w, results):
    thetas = np.linspace(0, np.pi / 2, cfg.grids.thetas)
    samples = _samples(cfg)
    traces = _correlator_tau(cfg, lambda grid: ex.theta_sweep(
        cfg.device, cfg.omega_laser, power_to_alpha(cfg.drive.power_pw, cfg.device), samples,
        thetas, _theta0(cfg), grid, power=cfg.drive.power_pw, seed=cfg.seed))
    w.table("theta_sweep", ("theta_deg", "tau_ns", "c", "g2"),
            ((math.degrees(t.theta), *r) for t in traces for r in t.rows()))
    w.table("theta_c0", ("theta_deg", "c0_spin", "c0_literal", "c_inf", "tau_corr_ns"),
            ((math.degrees(t.theta), t.c0_spin, t.c0, t.c_inf, t.tau_corr) for t in traces))
    c0 = [t.c0_spin for t in traces]
    results.update(theta_deg=[math.degrees(t.theta) for t in traces], c0_spin=c0,
                   monotone_decreasing=bool(np.all(np.diff(c0) <= 0)),
                   theta0_deg=math.degrees(traces[0].theta0) if traces else None)


def _run_power_sweep(cfg, w, results):
    samples = _samples(cfg)
    traces = [_single_correlator(cfg, samples, p) for p in cfg.grids.powers]
    w.table("power_sweep", ("power_pw", "tau_ns", "c", "g2"),
            ((t.power, *r) for t in traces for r in t.rows()))
    w.table("power_c0", ("power_pw", "c0_spin", "c0_literal", "c_inf", "tau_corr_ns"),
            ((t.power, t.c0_spin, t.c0, t.c_inf, t.tau_corr) for t in traces))
    results.update(power_pw=list(cfg.grids.powers), c0_spin=[t.c0_spin for t in traces],
                   tau_corr_ns=[t.tau_corr for t in traces])


def _spectrum_at(cfg, power, samples):
    t = _single_correlator(cfg, samples, power, uniform=True)
    return spectra.fit_lorentzian(spectra.spectrum_from_correlator(t), window=cfg.spectrum.fit_window)


def _fit_scalars(s):
    f = s.fit
    return {"gamma_eff_per_s": s.gamma_eff, "fwhm_mhz": f.fwhm, "fit_residual": f.residual,
            "fit_reliable": f.reliable, "fit_amplitude_per_mhz": f.amplitude,
            "fit_offset_per_mhz": f.offset, "parseval_ratio": s.integral() / (s.c0 / 2)}


def _run_spectrum(cfg, w, results):
    samples = _samples(cfg)
    spec = _spectrum_at(cfg, cfg.drive.power_pw, samples)
    model = spectra.lorentzian(spec.freq, spec.fit.amplitude, spec.fit.fwhm, spec.fit.offset)
    sel = spec.freq <= spec.fit.f_max
    w.table("spectrum", ("freq_mhz", "s_per_mhz", "s_fit_per_mhz"),
            zip(spec.freq[sel], spec.s[sel], model[sel]))
    results.update(_fit_scalars(spec), power_pw=cfg.drive.power_pw, c0_transformed=spec.c0)
    if cfg.spectrum.self_consistency:
        other = _spectrum_at(dataclasses.replace(cfg, seed=cfg.seed + 1), cfg.drive.power_pw, None)
        results["self_consistency_mismatch"] = spectra.spectrum_mismatch(spec, other)
    if cfg.spectrum.power_law:
        pts = []
        for p in cfg.grids.powers:
            s = spec if p == cfg.drive.power_pw else _spectrum_at(cfg, p, samples)
            pts.append((p, s))
        w.table("gamma_vs_power", ("power_pw", "gamma_eff_per_s", "fwhm_mhz", "fit_residual",
                                   "fit_reliable"),
                ((p, s.gamma_eff, s.fit.fwhm, s.fit.residual, s.fit.reliable) for p, s in pts))
        law = spectra.gamma_vs_power(pts)
        results["power_law"] = {"slope_per_s_per_pw": law.slope, "intercept_per_s": law.intercept,
                                "r2": law.r2}


@dataclass
class OracleReport:
    rows: list
    points: dict
    passed: bool


def oracle_check(cfg: RunConfig, detection_hook=None) -> OracleReport:
    """Regression versus trajectory g2 at each configured parameter point."""
    o = cfg.oracle
    rows, points = [], {}
    for name in o.points:
        params, power = cfg.device, cfg.drive.power_pw
        if name == "g0":
            params = params.replace(g=0.0)
        elif name == "half_power":
            power = power / 2
        if power <= 0:
            raise ValueError("oracle check needs a positive drive power")
        duration = o.duration_ns * cfg.drive.power_pw / power
        samples = _samples(cfg, params, (o.n_overhauser, o.n_wandering))
        basis = analyzer_basis(math.radians(cfg.basis.theta_deg),
                               ex.resolve_theta0(params, _theta0(cfg)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cmp = tr.compare_with_regression(params, cfg.omega_laser, power_to_alpha(power, params),
                                             basis, samples, duration, o.tau_edges, seed=cfg.seed,
                                             detection_hook=detection_hook)
        est = cmp.estimate
        clicks = min(est.clicks_x, est.clicks_xbar)
        info = {"max_abs_z": float(np.max(np.abs(cmp.z))), "passed": cmp.passed,
                "clicks_x": est.clicks_x, "clicks_xbar": est.clicks_xbar,
                "duration_ns": duration, "power_pw": power}
        if clicks < o.min_clicks:
            suggest = duration * o.min_clicks / max(clicks, 1)
            info["suggested_duration_ns"] = suggest
            warnings.warn(f"oracle point {name}: only {clicks} clicks per channel; "
                          f"suggest duration_ns >= {suggest:.3g}")
        points[name] = info
        rows += [(name, *r) for r in cmp.rows()]
    return OracleReport(rows, points, all(p["passed"] for p in points.values()))


def _run_oracle(cfg, w, results, detection_hook=None):
    rep = oracle_check(cfg, detection_hook)
    w.table("oracle", ("point", "tau_lo_ns", "tau_hi_ns", "c_regression", "c_trajectory", "se", "z"),
            rep.rows)
    results.update(points=rep.points, passed=rep.passed)
    return rep.passed


RUNNERS = {
    "loci": _run_loci, "tomography": _run_tomography, "correlator": _run_correlator,
    "theta_sweep": _run_theta_sweep, "power_sweep": _run_power_sweep, "spectrum": _run_spectrum,
}


@dataclass
class RunResult:
    status: int
    summary: dict
    outdir: Path
    error: dict | None = None


def _limit_threads(n):
    if n <= 0:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def error_record(code: int, kind: str, message: str, fld: str | None = None) -> dict:
    return {"status": "error", "code": code, "kind": kind, "message": message, "field": fld}


def run(cfg: RunConfig, outdir=None, detection_hook=None) -> RunResult:
    """Run the configured experiment and write its artifacts."""
    out = Path(outdir if outdir is not None else cfg.output.dir)
    w = Writer(cfg, out)
    results: dict = {}
    limiter = _limit_threads(cfg.threads)
    try:
        if cfg.experiment == "oracle_check":
            ok = _run_oracle(cfg, w, results, detection_hook)
        else:
            RUNNERS[cfg.experiment](cfg, w, results)
            ok = True
    except Exception as exc:  # any failure becomes an error record and exit code 2
        rec = error_record(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")
        _write_error(out, rec)
        return RunResult(EXIT_RUNTIME, {}, out, rec)
    finally:
        if limiter is not None:
            limiter.unregister()
    summary = w.summary(results, "ok" if ok else "failed")
    if not ok:
        rec = error_record(EXIT_RUNTIME, "oracle_mismatch", "oracle check failed: some |z| >= 3")
        _write_error(out, rec)
        return RunResult(EXIT_RUNTIME, summary, out, rec)
    return RunResult(EXIT_OK, summary, out)


def _write_error(out: Path, rec: dict):
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(rec, sort_keys=True, indent=2) + "\n")
    except OSError:
        pass


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinnoise",
                                 description="Spin-noise simulations of a charged quantum dot in a cavity.")
    ap.add_argument("--config", help="YAML config, or a CSV/JSON artifact to re-run")
    ap.add_argument("--experiment", choices=EXPERIMENTS, help="override the configured experiment")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", help="output directory (default: output.dir from the config)")
    ap.add_argument("--threads", type=int, help="BLAS threads, 0 = library default")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else config_from_dict({})
        if args.experiment:
            cfg.experiment = args.experiment
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        cfg = _check(cfg)
    except ConfigError as exc:
        rec = error_record(EXIT_VALIDATION, "validation", str(exc), exc.field)
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        if args.out:
            _write_error(Path(args.out), rec)
        return EXIT_VALIDATION
    res = run(cfg, args.out)
    if res.error:
        print(json.dumps(res.error, sort_keys=True), file=sys.stderr)
    else:
        print(json.dumps({"status": "ok", "outdir": str(res.outdir),
                          "artifacts": res.summary.get("artifacts", [])}, sort_keys=True))
    return res.status


if __name__ == "__main__":
    sys.exit(main())
