"""Noise-averaged observables: tomography, conditional loci, correlators, sweeps."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cavity
from .ensemble import Ensemble, numerators
from .params import DeviceParams, power_to_alpha
from .polarization import (
    A, D, DEFAULT_THETA0, H, L, R, V, analyzer_basis, stokes_arrays,
)
from .spin_system import NoiseSample

N_TAU = 1000
TAU_MIN_MAX = 500.0     # ns; the auto grid never stops earlier
N_RELAX = 10            # auto grid spans this many correlation times
N_SPECTRUM = 1 << 14    # uniform grid for spectra
SPECTRUM_SPAN = 100     # correlation times covered by the spectrum grid
THETA_POINTS = 13


def rate_cut(params: DeviceParams) -> float:
    """Boundary (1/ns) between optical modes and spin-memory modes.

    A tenth of the trion decay rate: every optical coherence decays faster,
    every spin-population mode at the powers of interest decays slower.
    """
    return 0.1 * cavity.purcell_and_drive(params, params.omega_qd_mean).total_decay / params.hbar


# --- tomography ------------------------------------------------------------------

@dataclass
class TomographySweep:
    omega_laser: np.ndarray
    i_h: np.ndarray
    i_v: np.ndarray
    s_hv: np.ndarray
    s_da: np.ndarray
    s_rl: np.ndarray
    polarized_norm: np.ndarray
    intensities: dict = field(default_factory=dict)

    def rows(self):
        cols = (self.omega_laser, self.i_h, self.i_v, self.s_hv, self.s_da, self.s_rl, self.polarized_norm)
        return list(zip(*cols))


def tomography_sweep(params: DeviceParams, omega_grid, alpha_in: float, samples) -> TomographySweep:
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.size == 0:
        raise ValueError("empty omega grid")
    if not samples:
        raise ValueError("empty sample set")
    names = {"H": H, "V": V, "D": D, "A": A, "R": R, "L": L}
    inten = {k: np.empty(omega_grid.size) for k in names}
    for i, w in enumerate(omega_grid):
        ens = Ensemble(params, w, alpha_in, samples, spectral=False)
        for k, j in names.items():
            inten[k][i] = ens.intensity(j)

    def ratio(a, b):
        tot = inten[a] + inten[b]
        if np.any(tot <= 0):
            raise ValueError("no signal")
        return (inten[a] - inten[b]) / tot

    s_hv, s_da, s_rl = ratio("H", "V"), ratio("D", "A"), ratio("R", "L")
    norm = np.sqrt(s_hv ** 2 + s_da ** 2 + s_rl ** 2)
    return TomographySweep(omega_grid, inten["H"], inten["V"], s_hv, s_da, s_rl, norm, inten)


# --- conditional loci ------------------------------------------------------------

SPINS = ("up", "down", "empty")


@dataclass
class Loci:
    omega: np.ndarray
    stokes: dict          # spin -> (N, 3) array of (s_hv, s_da, s_rl)

    def rotated(self, phi: float) -> "Loci":
        """Loci rotated by ``phi`` about the s_hv axis (da -> rl sense)."""
        c, s = np.cos(phi), np.sin(phi)
        out = {}
        for k, v in self.stokes.items():
            w = v.copy()
            w[:, 1] = c * v[:, 1] - s * v[:, 2]
            w[:, 2] = s * v[:, 1] + c * v[:, 2]
            out[k] = w
        return Loci(self.omega.copy(), out)

    def rows(self):
        for spin in SPINS:
            for w, s in zip(self.omega, self.stokes[spin]):
                yield (w, spin, *s)


def conditional_stokes_loci(params: DeviceParams, omega_grid, dephasing: bool = False) -> Loci:
    """Output Stokes vector per spin state, noise-free.

    Pure dephasing is switched off unless ``dephasing`` is set, so every
    conditional output is the pure state obtained from the linear response.
    """
    p = params if dephasing else params.replace(gamma_star=0.0)
    omega_grid = np.asarray(omega_grid, dtype=float)
    out = {}
    for spin in SPINS:
        f = np.array([cavity.conditional_jones(p, w, spin).as_array() for w in omega_grid])
        s_hv, s_da, s_rl, _ = stokes_arrays(f[:, 0], f[:, 1])
        out[spin] = np.stack([s_hv, s_da, s_rl], axis=1)
    return Loci(omega_grid, out)


def _wrap_axis(phi: float) -> float:
    """Map a line direction to (-pi/2, pi/2]."""
    phi = (phi + np.pi / 2) % np.pi - np.pi / 2
    return np.pi / 2 if np.isclose(phi, -np.pi / 2) else phi


def _mirror_mismatch(up: np.ndarray, down: np.ndarray, phi: float) -> float:
    c, s = np.cos(2 * phi), np.sin(2 * phi)
    refl = np.stack([c * up[:, 0] + s * up[:, 1], s * up[:, 0] - c * up[:, 1]], axis=1)
    d2 = np.sum((refl[:, None, :] - down[None, :, :]) ** 2, axis=-1)
    return float(np.mean(d2.min(axis=1)) + np.mean(d2.min(axis=0)))


def find_symmetry_axes(loci: Loci, spread_tol: float = 1e-6) -> float:
    """Azimuth (radians, measured from D towards R) of the mirror axis of the up/down loci.

    The combined cloud in the s_da-s_rl plane is symmetric about the mirror
    line, which is therefore one of its principal axes; the one that maps the
    up locus onto the down locus best (nearest-point least squares) wins.
    """
    up = loci.stokes["up"][:, 1:]
    down = loci.stokes["down"][:, 1:]
    pts = np.vstack([up, down])
    m = pts.T @ pts / len(pts)
    w, v = np.linalg.eigh(m)
    if w[-1] < spread_tol:
        raise ValueError("degenerate loci: no conditional rotation (g = 0?)")
    cands = [np.arctan2(v[1, k], v[0, k]) for k in (1, 0)]
    errs = [_mirror_mismatch(up, down, c) for c in cands]
    return float(_wrap_axis(cands[int(np.argmin(errs))]))


def resolve_theta0(params: DeviceParams, theta0) -> float:
    """``None`` -> default, ``"auto"`` -> extracted from noise-free loci."""
    if theta0 is None:
        return DEFAULT_THETA0
    if isinstance(theta0, str):
        if theta0 != "auto":
            raise ValueError(f"theta0 must be a number or 'auto', got {theta0!r}")
        grid = params.omega_qd_mean + np.linspace(-20, 20, 161)
        return find_symmetry_axes(conditional_stokes_loci(params, grid))
    return float(theta0)


# --- correlators -----------------------------------------------------------------

@dataclass
class CorrelatorTrace:
    theta: float
    power: float
    tau: np.ndarray
    c: np.ndarray
    g2: np.ndarray
    c0_spin: float = float("nan")        # slow-mode extrapolation to tau = 0
    tau_corr: float = float("nan")       # integral correlation time of the slow part, ns
    c_inf: float = 0.0                   # long-delay plateau left by frozen-noise averaging
    theta0: float = DEFAULT_THETA0
    omega_laser: float = 0.0
    seed: int | None = None
    method: str = "eig"

    @property
    def c0(self) -> float:
        """Literal value at the first delay (includes the optical transient)."""
        return float(self.c[0]) if len(self.c) else float("nan")

    def rows(self):
        return list(zip(self.tau, self.c, self.g2))


def auto_tau_grid(tau_corr: float, n: int | None = None, uniform: bool = False) -> np.ndarray:
    """Delays for a correlator trace.

    Log grid: 0 plus log-spaced delays up to max(500 ns, 10 correlation
    times). Uniform grid (for spectra): 2^14 points over 100 correlation
    times, which resolves the spectral core by tens of bins.
    """
    ok = np.isfinite(tau_corr) and tau_corr > 0
    if uniform:
        tmax = max(TAU_MIN_MAX, SPECTRUM_SPAN * tau_corr) if ok else TAU_MIN_MAX
        return np.linspace(0.0, tmax, n or N_SPECTRUM)
    tmax = max(TAU_MIN_MAX, N_RELAX * tau_corr) if ok else TAU_MIN_MAX
    return np.concatenate([[0.0], np.logspace(-2, np.log10(tmax), (n or N_TAU) - 1)])


def _resolve_grid(tau_grid, tc, uniform):
    if tau_grid is None or isinstance(tau_grid, str):
        return auto_tau_grid(tc, uniform=uniform or tau_grid == "uniform")
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or np.any(tau < 0) or np.any(np.diff(tau) < 0):
        raise ValueError("tau grid must be nonnegative and sorted")
    return tau


def _trace_from_parts(parts, params, theta, theta0, power, omega_laser, tau_grid, seed, uniform,
                      g2=None):
    cut = rate_cut(params)
    tc = parts.correlation_time(cut)
    tau = _resolve_grid(tau_grid, tc, uniform)
    if g2 is None:
        g2 = parts.g2(tau)
    return CorrelatorTrace(float(theta), float(power), tau, 1.0 - g2, g2,
                           float(parts.slow_c0(cut)), float(tc), parts.plateau(), float(theta0),
                           float(omega_laser), seed, parts.method)


def _empty_trace(theta, theta0, omega_laser, seed):
    warnings.warn("zero input power: no photons, returning an empty correlator trace")
    e = np.zeros(0)
    return CorrelatorTrace(float(theta), 0.0, e, e.copy(), e.copy(), float("nan"), float("nan"),
                           0.0, float(theta0), float(omega_laser), seed, "none")


def correlator(params: DeviceParams, omega_laser: float, alpha_in: float, theta: float,
               theta0=None, tau_grid=None, samples=None, *, power: float | None = None,
               ensemble: Ensemble | None = None, seed: int | None = None,
               uniform: bool = False) -> CorrelatorTrace:
    """Noise-averaged C_theta(tau) = 1 - g2 in the basis (theta, theta0).

    ``tau_grid=None`` picks an automatic grid reaching ten correlation
    times (log-spaced, or uniform if ``uniform``).
    """
    th0 = resolve_theta0(params, theta0)
    pw = float("nan") if power is None else power
    if alpha_in == 0:
        return _empty_trace(theta, th0, omega_laser, seed)
    if ensemble is None:
        if not samples:
            raise ValueError("empty sample set")
        ensemble = Ensemble(params, omega_laser, alpha_in, samples)
    parts = ensemble.correlation_parts(*ensemble.detection_pair(analyzer_basis(theta, th0)))
    return _trace_from_parts(parts, params, theta, th0, pw, omega_laser, tau_grid, seed, uniform)


def theta_sweep(params: DeviceParams, omega_laser: float, alpha_in: float, samples,
                thetas=None, theta0=None, tau_grid=None, power: float | None = None,
                seed: int | None = None) -> list:
    """Correlators for basis angles on [0, pi/2] (13 by default), sharing one ensemble."""
    thetas = np.linspace(0, np.pi / 2, THETA_POINTS) if thetas is None else np.asarray(thetas, float)
    th0 = resolve_theta0(params, theta0)
    if alpha_in == 0:
        return [_empty_trace(t, th0, omega_laser, seed) for t in thetas]
    ens = Ensemble(params, omega_laser, alpha_in, samples)
    parts = [ens.correlation_parts(*ens.detection_pair(analyzer_basis(t, th0))) for t in thetas]
    # one common grid (from the theta = first entry correlation time) so the exponentials are shared
    tau = _resolve_grid(tau_grid, parts[0].correlation_time(rate_cut(params)), False)
    nums = numerators(parts, tau)
    pw = float("nan") if power is None else power
    return [_trace_from_parts(pp, params, t, th0, pw, omega_laser, tau, seed, False, g2=n / pp.norm)
            for t, pp, n in zip(thetas, parts, nums)]


DEFAULT_POWERS = (1.0, 2.0, 4.0, 8.0, 16.0)


def power_sweep(params: DeviceParams, powers=DEFAULT_POWERS, omega_laser: float | None = None,
                theta: float = 0.0, theta0=None, samples=None, tau_grid=None,
                seed: int | None = None, uniform: bool = False) -> list:
    """Correlators at several optical powers (pW) converted with P / (hbar omega)."""
    w = params.omega_qd_mean if omega_laser is None else omega_laser
    th0 = resolve_theta0(params, theta0)
    out = []
    for p in powers:
        if p < 0:
            raise ValueError("power must be >= 0")
        if p == 0:
            out.append(_empty_trace(theta, th0, w, seed))
            continue
        out.append(correlator(params, w, power_to_alpha(p, params), theta, th0, tau_grid, samples,
                              power=float(p), seed=seed, uniform=uniform))
    return out


def zero_sample() -> list:
    return [NoiseSample()]


__all__ = [
    "TomographySweep", "tomography_sweep", "Loci", "conditional_stokes_loci",
    "find_symmetry_axes", "resolve_theta0", "CorrelatorTrace", "correlator", "theta_sweep",
    "power_sweep", "auto_tau_grid", "rate_cut", "DEFAULT_POWERS", "zero_sample",
]
