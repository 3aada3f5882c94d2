"""Monte Carlo wave-function photon counting.

An independent check of the regression-theorem pipeline: click streams are
generated event by event and g2 is estimated from coincidence histograms.

The two detectors see the displaced operators ``D = beta + A``. The
unraveling uses them directly as jump operators; the Hamiltonian picks up
``(i/2) sum (beta A^dag - beta* A)`` so the ensemble average reproduces the
master equation whose collected channels are ``D[A_x] + D[A_xbar]``.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .evolution import (
    N_CH, DetectionOperator, detection_operator, liouvillian, steady_state,
)
from .params import DeviceParams
from .polarization import AnalyzerBasis
from .spin_system import N_LEVELS, NoiseSample, SystemModel, build_model

# no-jump generator eigenvector condition number beyond which we refuse
COND_MAX = 1e10


@dataclass
class ClickStream:
    channel_x: np.ndarray
    channel_xbar: np.ndarray
    duration: float
    seed: int = 0
    sample: NoiseSample = field(default_factory=NoiseSample)
    jump_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channel_x = np.asarray(self.channel_x, dtype=float)
        self.channel_xbar = np.asarray(self.channel_xbar, dtype=float)

    def check(self) -> "ClickStream":
        for name in ("channel_x", "channel_xbar"):
            t = getattr(self, name)
            if t.size and (t.min() < 0 or t.max() > self.duration):
                raise ValueError(f"{name}: times outside [0, duration]")
            if np.any(np.diff(t) <= 0):
                raise ValueError(f"{name}: times not strictly increasing")
        return self

    def rates(self):
        return self.channel_x.size / self.duration, self.channel_xbar.size / self.duration

    def shifted(self, dt: float) -> "ClickStream":
        return ClickStream(self.channel_x + dt, self.channel_xbar + dt, self.duration + dt,
                           self.seed, self.sample, dict(self.jump_counts))


@dataclass
class Unraveling:
    """Jump operators and the exactly solvable no-jump generator."""
    generator: np.ndarray      # -i H_eff, 1/ns
    jumps: np.ndarray          # (K, n, n)
    channel: np.ndarray        # (K,) detector index or -1
    names: list
    mu: np.ndarray = None
    right: np.ndarray = None
    right_inv: np.ndarray = None

    def __post_init__(self):
        mu, r = np.linalg.eig(self.generator)
        cond = np.linalg.cond(r)
        if not cond < COND_MAX:
            raise RuntimeError(f"no-jump generator nearly defective (cond={cond:.3g})")
        self.mu, self.right, self.right_inv = mu, r, np.linalg.inv(r)


def unraveling(model: SystemModel, d_x: DetectionOperator, d_xbar: DetectionOperator) -> Unraveling:
    hb = model.params.hbar
    h = model.hamiltonian / hb
    jumps, channel, names = [], [], []
    for k, d in enumerate((d_x, d_xbar)):
        beta = d.background
        a = d.matrix - beta * np.eye(N_LEVELS)
        h = h + 0.5j * (beta * a.conj().T - np.conj(beta) * a)
        jumps.append(d.matrix)
        channel.append(k)
        names.append(d.label or ("x", "xbar")[k])
    for c, n in zip(model.collapse_ops, model.channels):
        if n.startswith("collected"):
            continue
        jumps.append(c)
        channel.append(-1)
        names.append(n)
    jumps = np.array(jumps, dtype=complex)
    gam = np.einsum("kji,kjl->il", jumps.conj(), jumps)
    gen = -1j * h - 0.5 * gam
    return Unraveling(gen, jumps, np.array(channel, dtype=np.int64), names)


def sample_pure_state(rho: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0, None)
    k = int(np.searchsorted(np.cumsum(w) / w.sum(), rng.random(), side="right"))
    return v[:, min(k, len(w) - 1)]


def _initial_state(model: SystemModel, initial, rng):
    if isinstance(initial, str):
        if initial == "empty":
            return np.eye(N_LEVELS, dtype=complex)[4]
        L = liouvillian(model)
        rho = steady_state(L, model.params.p_charged).matrix
        if initial == "charged":
            rho = rho.copy()
            rho[4, 4] = 0
            if np.real(np.trace(rho)) <= 0:
                raise ValueError("no charged population")
        elif initial != "stationary":
            raise ValueError(f"unknown initial state {initial!r}")
        return sample_pure_state(rho, rng)
    x = np.asarray(initial, dtype=complex)
    if x.ndim == 2:
        return sample_pure_state(x, rng)
    return x


def _rng(seed, index=None):
    return np.random.default_rng(seed if index is None else [seed, index])


def simulate_clicks(model: SystemModel, d_x: DetectionOperator, d_xbar: DetectionOperator,
                    duration: float, seed: int = 0, initial="stationary", index=None,
                    unravel: Unraveling | None = None) -> ClickStream:
    """One photon-counting record of length ``duration`` (ns).

    ``initial`` is ``"stationary"`` (pure state drawn from the full steady
    state), ``"charged"``, ``"empty"``, a state vector, or a density matrix.
    ``(seed, index)`` selects an independent random stream.
    """
    if not duration > 0:
        raise ValueError("duration must be > 0")
    rng = _rng(seed, index)
    u = unravel or unraveling(model, d_x, d_xbar)
    psi0 = _initial_state(model, initial, rng)
    cx, cxb, nj, _ = kernels.mcwf_stream(u.mu, u.right, u.right_inv, u.jumps, u.channel,
                                         psi0, float(duration), rng)
    counts = {n: int(c) for n, c in zip(u.names, nj)}
    return ClickStream(cx, cxb, float(duration), int(seed), model.sample, counts)


def ensemble_states(model: SystemModel, d_x: DetectionOperator, d_xbar: DetectionOperator,
                    rho0: np.ndarray, times, n_traj: int, seed: int = 0) -> np.ndarray:
    """Trajectory-averaged density matrices at ``times`` (ns)."""
    times = np.sort(np.asarray(times, dtype=float))
    u = unraveling(model, d_x, d_xbar)
    acc = np.zeros((len(times), N_LEVELS, N_LEVELS), dtype=complex)
    for i in range(n_traj):
        rng = _rng(seed, i)
        psi0 = sample_pure_state(np.asarray(rho0), rng)
        *_, rec = kernels.mcwf_stream(u.mu, u.right, u.right_inv, u.jumps, u.channel,
                                      psi0, float(times[-1]), rng, times)
        acc += np.einsum("ti,tj->tij", rec, rec.conj())
    return acc / n_traj


# --- estimator -------------------------------------------------------------------

@dataclass
class G2Estimate:
    edges: np.ndarray
    g2: np.ndarray
    se: np.ndarray
    counts: np.ndarray

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def exposure(edges, duration):
    """Integral of (T - tau) over each bin; the pair-count weight of a stationary record."""
    e = np.minimum(np.asarray(edges, dtype=float), duration)
    prim = duration * e - 0.5 * e ** 2
    return np.diff(prim)


def estimate_g2(stream: ClickStream, tau_bins=None) -> G2Estimate:
    """Normalized x -> xbar coincidence histogram with Poisson errors.

    ``tau_bins`` are bin edges in ns (default: 1 ns bins up to 50 ns).
    """
    edges = np.arange(0.0, 51.0) if tau_bins is None else np.asarray(tau_bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("tau_bins must be increasing edges")
    nx, nxb = stream.channel_x.size, stream.channel_xbar.size
    if nx == 0 or nxb == 0:
        raise ValueError("empty channel")
    if min(nx, nxb) < 1000:
        warnings.warn("fewer than 1000 clicks in a channel; g2 errors are unreliable")
    counts = kernels.coincidence_histogram(stream.channel_x, stream.channel_xbar, edges)
    rx, rxb = stream.rates()
    norm = rx * rxb * exposure(edges, stream.duration)
    return G2Estimate(edges, counts / norm, np.sqrt(np.maximum(counts, 1)) / norm, counts)


# --- noise-averaged oracle -------------------------------------------------------

@dataclass
class OracleEstimate:
    edges: np.ndarray
    g2: np.ndarray
    se: np.ndarray
    rate_x: float
    rate_xbar: float
    clicks_x: int
    clicks_xbar: int
    duration_charged: float
    duration_empty: float

    @property
    def c(self):
        return 1.0 - self.g2

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def averaged_oracle(params: DeviceParams, omega_laser: float, alpha_in: float, basis: AnalyzerBasis,
                    samples, duration: float, tau_bins, seed: int = 0,
                    duration_empty: float | None = None, detection_hook=None) -> OracleEstimate:
    """Sample-averaged g2 from simulated click records.

    Each charged sample gets a stationary record of ``duration`` ns; the empty
    dot gets one record of ``duration_empty`` (default: the same total time).
    Coincidences and singles are averaged separately with weights
    ``p * w_s`` and ``1 - p``, mirroring the regression pipeline.
    ``detection_hook(d) -> d`` alters the trajectory-side detection operators
    (negative-control testing).
    """
    if not samples:
        raise ValueError("empty sample set")
    edges = np.asarray(tau_bins, dtype=float)
    p = params.p_charged
    num = np.zeros(len(edges) - 1)
    var = np.zeros(len(edges) - 1)
    rx = rxb = vx = vxb = 0.0
    nx_tot = nxb_tot = 0
    expo = exposure(edges, duration)
    wsum = sum(s.weight for s in samples)
    if p > 0:
        for i, s in enumerate(samples):
            model = build_model(params, omega_laser, alpha_in, s)
            dx = detection_operator(model.response, basis.jones_x, "x")
            dxb = detection_operator(model.response, basis.jones_xbar, "xbar")
            if detection_hook is not None:
                dx, dxb = detection_hook(dx), detection_hook(dxb)
            st = simulate_clicks(model, dx, dxb, duration, seed, "charged", index=i)
            cnt = kernels.coincidence_histogram(st.channel_x, st.channel_xbar, edges)
            w = p * s.weight / wsum
            num += w * cnt / expo
            var += w ** 2 * cnt / expo ** 2
            rx += w * st.channel_x.size / duration
            rxb += w * st.channel_xbar.size / duration
            vx += w ** 2 * st.channel_x.size / duration ** 2
            vxb += w ** 2 * st.channel_xbar.size / duration ** 2
            nx_tot += st.channel_x.size
            nxb_tot += st.channel_xbar.size
    t_e = 0.0
    if p < 1:
        t_e = float(duration_empty or duration * len(samples))
        model = build_model(params, omega_laser, alpha_in, NoiseSample())
        dx = detection_operator(model.response, basis.jones_x, "x")
        dxb = detection_operator(model.response, basis.jones_xbar, "xbar")
        if detection_hook is not None:
            dx, dxb = detection_hook(dx), detection_hook(dxb)
        st = simulate_clicks(model, dx, dxb, t_e, seed, "empty", index=len(samples))
        ex = exposure(edges, t_e)
        cnt = kernels.coincidence_histogram(st.channel_x, st.channel_xbar, edges)
        w = 1 - p
        num += w * cnt / ex
        var += w ** 2 * cnt / ex ** 2
        rx += w * st.channel_x.size / t_e
        rxb += w * st.channel_xbar.size / t_e
        vx += w ** 2 * st.channel_x.size / t_e ** 2
        vxb += w ** 2 * st.channel_xbar.size / t_e ** 2
        nx_tot += st.channel_x.size
        nxb_tot += st.channel_xbar.size
    if rx <= 0 or rxb <= 0:
        raise ValueError("empty channel")
    g2 = num / (rx * rxb)
    # Poisson errors on the pair counts, plus the singles in quadrature
    rel = np.sqrt(np.maximum(var, 0)) / np.maximum(num, 1e-300)
    rel_r = np.sqrt(vx / rx ** 2 + vxb / rxb ** 2)
    se = np.abs(g2) * np.sqrt(rel ** 2 + rel_r ** 2)
    se = np.where(num > 0, se, np.sqrt(np.maximum(var, 0)) / (rx * rxb))
    return OracleEstimate(edges, g2, se, rx, rxb, nx_tot, nxb_tot, float(duration), t_e)


def regression_binned(parts, edges, duration: float, duration_empty: float | None = None,
                      nodes: int = 24) -> np.ndarray:
    """Regression g2 averaged over bins with the same (T - tau) weight as the estimator."""
    edges = np.asarray(edges, dtype=float)
    x, w = np.polynomial.legendre.leggauss(nodes)
    out = np.empty(len(edges) - 1)
    for k in range(len(out)):
        a, b = edges[k], edges[k + 1]
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        wt = 0.5 * (b - a) * w * np.clip(duration - t, 0, None)
        charged = parts.numerator(t) - parts.const
        out[k] = wt @ charged / wt.sum() + parts.const
    return out / parts.norm


@dataclass
class OracleComparison:
    edges: np.ndarray
    c_regression: np.ndarray
    c_trajectory: np.ndarray
    se: np.ndarray
    z: np.ndarray
    estimate: OracleEstimate

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) < 3))

    def rows(self):
        for i in range(len(self.z)):
            yield (self.edges[i], self.edges[i + 1], self.c_regression[i], self.c_trajectory[i],
                   self.se[i], self.z[i])


def compare_with_regression(params: DeviceParams, omega_laser: float, alpha_in: float,
                            basis: AnalyzerBasis, samples, duration: float, tau_bins,
                            seed: int = 0, detection_hook=None) -> OracleComparison:
    from .ensemble import Ensemble

    est = averaged_oracle(params, omega_laser, alpha_in, basis, samples, duration, tau_bins,
                          seed, detection_hook=detection_hook)
    ens = Ensemble(params, omega_laser, alpha_in, samples)
    parts = ens.correlation_parts(*ens.detection_pair(basis))
    g_reg = regression_binned(parts, est.edges, duration)
    se = np.where(est.se > 0, est.se, np.inf)
    z = (est.g2 - g_reg) / se
    return OracleComparison(est.edges, 1 - g_reg, est.c, est.se, z, est)


# --- detector post-processing (all off by default) -------------------------------

def _clip(t, duration):
    t = np.sort(t)
    return t[(t >= 0) & (t <= duration)]


def apply_jitter(stream: ClickStream, sigma: float, seed: int = 0) -> ClickStream:
    """Gaussian timing jitter of std ``sigma`` ns; clicks leaving the window are dropped."""
    rng = np.random.default_rng(seed)
    x = _clip(stream.channel_x + rng.normal(0, sigma, stream.channel_x.size), stream.duration)
    xb = _clip(stream.channel_xbar + rng.normal(0, sigma, stream.channel_xbar.size), stream.duration)
    return ClickStream(x, xb, stream.duration, stream.seed, stream.sample)


def _dead(t, dead):
    if t.size == 0:
        return t
    keep = [t[0]]
    for x in t[1:]:
        if x - keep[-1] >= dead:
            keep.append(x)
    return np.array(keep)


def apply_dead_time(stream: ClickStream, dead: float) -> ClickStream:
    """Non-paralyzable dead time per detector."""
    return ClickStream(_dead(stream.channel_x, dead), _dead(stream.channel_xbar, dead),
                       stream.duration, stream.seed, stream.sample)


def add_dark_counts(stream: ClickStream, rate: float, seed: int = 0) -> ClickStream:
    """Superpose Poissonian dark counts of ``rate`` (1/ns) on each detector."""
    rng = np.random.default_rng(seed)
    out = []
    for t in (stream.channel_x, stream.channel_xbar):
        n = rng.poisson(rate * stream.duration)
        out.append(np.unique(np.concatenate([t, rng.uniform(0, stream.duration, n)])))
    return ClickStream(out[0], out[1], stream.duration, stream.seed, stream.sample)


# --- timestamp I/O ---------------------------------------------------------------

_MAGIC = b"SNCS"
_HEADER = struct.Struct("<4sIdqQQ")


def write_binary(stream: ClickStream, path):
    """Little-endian: magic, version, duration f8, seed i8, n_x u8, n_xbar u8, then f8 times."""
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, 1, stream.duration, stream.seed,
                             stream.channel_x.size, stream.channel_xbar.size))
        f.write(stream.channel_x.astype("<f8").tobytes())
        f.write(stream.channel_xbar.astype("<f8").tobytes())


def read_binary(path) -> ClickStream:
    with open(path, "rb") as f:
        raw = f.read()
    magic, ver, dur, seed, nx, nxb = _HEADER.unpack_from(raw)
    if magic != _MAGIC or ver != 1:
        raise ValueError("not a click-stream file")
    off = _HEADER.size
    x = np.frombuffer(raw, "<f8", nx, off)
    xb = np.frombuffer(raw, "<f8", nxb, off + 8 * nx)
    return ClickStream(x.copy(), xb.copy(), dur, seed)


def write_csv(stream: ClickStream, path):
    """Two columns (x_ns, xbar_ns); the shorter column is padded with empty cells."""
    n = max(stream.channel_x.size, stream.channel_xbar.size)
    with open(path, "w") as f:
        f.write(f"# duration_ns={stream.duration!r}\n# seed={stream.seed}\n")
        f.write("x_ns,xbar_ns\n")
        for i in range(n):
            a = repr(float(stream.channel_x[i])) if i < stream.channel_x.size else ""
            b = repr(float(stream.channel_xbar[i])) if i < stream.channel_xbar.size else ""
            f.write(f"{a},{b}\n")


def read_csv(path, duration: float | None = None) -> ClickStream:
    meta, x, xb = {}, [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
                continue
            if line.startswith("x_ns"):
                continue
            a, _, b = line.partition(",")
            if a:
                x.append(float(a))
            if b:
                xb.append(float(b))
    if duration is None:
        if "duration_ns" in meta:
            duration = float(meta["duration_ns"])
        else:
            duration = max(x[-1] if x else 0.0, xb[-1] if xb else 0.0)
    return ClickStream(np.array(x), np.array(xb), float(duration), int(meta.get("seed", 0)))


__all__ = [
    "ClickStream", "Unraveling", "unraveling", "simulate_clicks", "ensemble_states",
    "G2Estimate", "estimate_g2", "exposure", "OracleEstimate", "averaged_oracle",
    "regression_binned", "OracleComparison", "compare_with_regression",
    "apply_jitter", "apply_dead_time", "add_dark_counts",
    "write_binary", "read_binary", "write_csv", "read_csv", "N_CH",
]
