"""Spin-noise spectra, single-Lorentzian fits and rate-versus-power regression.

Convention: ``S(f) = 2 * int_0^inf C(tau) cos(2 pi f tau) dtau`` (one-sided,
C even in tau), so ``int_0^inf S df = C(0) / 2``. Delays are in ns and
frequencies in MHz; S is reported in 1/MHz.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.stats

NS_PER_US = 1e3


class FitError(RuntimeError):
    def __init__(self, msg, residual=None, params=None):
        super().__init__(msg)
        self.residual = residual
        self.params = params


@dataclass
class LorentzFit:
    amplitude: float
    fwhm: float            # MHz
    offset: float
    residual: float        # relative L2 norm over the fit window
    f_max: float           # MHz, upper edge of the fit window
    reliable: bool = True


@dataclass
class NoiseSpectrum:
    freq: np.ndarray       # MHz
    s: np.ndarray          # 1/MHz
    d_tau: float           # ns, sampling step of the transformed correlator
    c0: float              # zero-delay value of the transformed correlator
    fit: LorentzFit | None = None
    meta: dict = field(default_factory=dict)

    @property
    def gamma_eff(self) -> float:
        """pi * FWHM in 1/s; NaN before fitting."""
        return float("nan") if self.fit is None else gamma_from_fwhm(self.fit.fwhm)

    @property
    def resolution(self) -> float:
        return float(self.freq[1] - self.freq[0])

    @property
    def nyquist(self) -> float:
        return float(self.freq[-1])

    def integral(self) -> float:
        """Trapezoid integral of S over [0, Nyquist]."""
        return float(np.trapezoid(self.s, self.freq))

    def rows(self):
        return list(zip(self.freq, self.s))


def gamma_from_fwhm(fwhm_mhz: float) -> float:
    return float(np.pi * fwhm_mhz * 1e6)


def resample_uniform(tau, c, n: int | None = None):
    """Linear interpolation onto a uniform grid from tau[0] to tau[-1].

    The interpolation error is bounded by max|C''| * h^2 / 8 for the
    original spacing h.
    """
    tau = np.asarray(tau, dtype=float)
    c = np.asarray(c, dtype=float)
    if tau.ndim != 1 or tau.size != c.size or tau.size < 2:
        raise ValueError("tau and c must be 1-d of equal length >= 2")
    if np.any(np.diff(tau) <= 0):
        raise ValueError("tau must be strictly increasing")
    h = np.diff(tau)
    if np.allclose(h, h[0], rtol=1e-9, atol=0):
        return tau, c
    n = n or max(tau.size, 1 << 14)
    grid = np.linspace(tau[0], tau[-1], n)
    return grid, np.interp(grid, tau, c)


def spectrum_from_correlator(trace_or_tau, c=None, n: int | None = None,
                             subtract_plateau: bool = True) -> NoiseSpectrum:
    """One-sided cosine transform of C by FFT of its even extension.

    Accepts a CorrelatorTrace or explicit (tau, c) arrays. The grid must start
    at tau = 0; non-uniform grids are linearly resampled. For a trace, its
    long-delay plateau ``c_inf`` (a delta at f = 0) is removed first unless
    ``subtract_plateau`` is false; ``NoiseSpectrum.c0`` is the zero-delay
    value of what was actually transformed.
    """
    if c is None:
        tau, c = trace_or_tau.tau, np.asarray(trace_or_tau.c, dtype=float)
        if subtract_plateau:
            c = c - getattr(trace_or_tau, "c_inf", 0.0)
    else:
        tau = trace_or_tau
    tau = np.asarray(tau, dtype=float)
    c = np.asarray(c, dtype=float)
    if tau.size and np.any(np.diff(tau) < 0):
        raise ValueError("tau must be monotone")
    if tau.size < 2:
        raise ValueError("need at least two delays")
    if tau[0] != 0:
        raise ValueError("tau grid must start at 0")
    tau, c = resample_uniform(tau, c, n)
    dt = tau[1] - tau[0]
    ext = np.concatenate([c, c[-2:0:-1]])
    m = ext.size
    s = dt * np.real(np.fft.rfft(ext))        # ns
    freq = np.fft.rfftfreq(m, d=dt) * NS_PER_US  # GHz -> MHz
    return NoiseSpectrum(freq, s / NS_PER_US, float(dt), float(c[0]))


def lorentzian(f, amplitude, fwhm, offset):
    return amplitude / (1.0 + (2.0 * f / fwhm) ** 2) + offset


def _half_width_guess(freq, s):
    floor = np.median(s[len(s) // 2:])
    peak = s[0] - floor
    if peak <= 0:
        return None, floor
    y = s - floor
    below = np.nonzero(y < 0.5 * peak)[0]
    if below.size == 0 or below[0] == 0:
        return None, floor
    i = below[0]
    # linear interpolation of the half-maximum crossing keeps the guess scale-covariant
    frac = (y[i - 1] - 0.5 * peak) / (y[i - 1] - y[i])
    return float(freq[i - 1] + frac * (freq[i] - freq[i - 1])), floor


def fit_lorentzian(spec: NoiseSpectrum, window: float = 10.0, max_nfev: int = 2000) -> NoiseSpectrum:
    """Least-squares fit of A / (1 + (2 f / FWHM)^2) + b.

    The fit uses frequencies up to ``window`` half-widths (from a half-maximum
    estimate) so it is invariant under rescaling of the time axis.
    """
    freq, s = spec.freq, spec.s
    hw, floor = _half_width_guess(freq, s)
    unreliable = hw is None
    if hw is None:
        hw = freq[min(len(freq) - 1, 10)]
    sel = freq <= window * hw
    if sel.sum() < 10:
        sel = np.zeros_like(sel)
        sel[:min(len(freq), 10)] = True
        unreliable = True
    f, y = freq[sel], s[sel]
    p0 = (max(s[0] - floor, 1e-300), 2 * hw, floor)
    try:
        popt, _ = scipy.optimize.curve_fit(lorentzian, f, y, p0=p0, maxfev=max_nfev,
                                           bounds=([-np.inf, 1e-12, -np.inf], [np.inf, np.inf, np.inf]))
    except (RuntimeError, ValueError) as exc:
        res = float(np.linalg.norm(lorentzian(f, *p0) - y) / max(np.linalg.norm(y), 1e-300))
        raise FitError(f"Lorentzian fit failed: {exc}", residual=res, params=p0) from exc
    model = lorentzian(f, *popt)
    scale = np.linalg.norm(y)
    res = float(np.linalg.norm(model - y) / scale) if scale > 0 else float("inf")
    a, fwhm, b = (float(x) for x in popt)
    resid_sd = float(np.std(model - y))
    if not np.isfinite(res) or a <= 3 * resid_sd or a <= 1e-6 * max(abs(b), 1e-300):
        unreliable = True
    if fwhm < spec.resolution or fwhm > 2 * spec.nyquist:
        unreliable = True
    spec.fit = LorentzFit(a, fwhm, b, res, float(f[-1]), not unreliable)
    return spec


def spectrum_mismatch(a: NoiseSpectrum, b: NoiseSpectrum, f_max: float | None = None) -> float:
    """Relative L2 difference of two spectra on a's grid (over f <= f_max)."""
    fm = f_max if f_max is not None else (a.fit.f_max if a.fit else a.nyquist)
    sel = a.freq <= fm
    sb = np.interp(a.freq[sel], b.freq, b.s)
    return float(np.linalg.norm(a.s[sel] - sb) / np.linalg.norm(a.s[sel]))


@dataclass
class PowerLaw:
    slope: float           # 1/s per pW
    intercept: float       # 1/s
    r2: float
    powers: np.ndarray
    gamma_eff: np.ndarray


def gamma_vs_power(specs) -> PowerLaw:
    """OLS of gamma_eff against power for (power, NoiseSpectrum) pairs."""
    specs = list(specs)
    if len(specs) < 3:
        raise ValueError("need at least 3 powers")
    p = np.array([float(x) for x, _ in specs])
    g = np.array([s.gamma_eff if isinstance(s, NoiseSpectrum) else float(s) for _, s in specs])
    if not np.all(np.isfinite(g)):
        raise ValueError("unfitted spectrum in the power series")
    r = scipy.stats.linregress(p, g)
    return PowerLaw(float(r.slope), float(r.intercept), float(r.rvalue ** 2), p, g)


__all__ = [
    "FitError", "LorentzFit", "NoiseSpectrum", "gamma_from_fwhm", "resample_uniform",
    "spectrum_from_correlator", "lorentzian", "fit_lorentzian", "spectrum_mismatch",
    "PowerLaw", "gamma_vs_power",
]
