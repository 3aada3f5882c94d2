"""Noise-averaged regression-theorem machinery.

Collapse operators depend only on the laser energy, and the frozen noise
enters the Hamiltonian linearly, so the charged-block Liouvillian of every
sample is ``L0 + offset * G_trion + sum_i B_i * G_i``. The whole sample set is
then built, diagonalized and reduced as stacked 16x16 arrays.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from . import kernels
from .evolution import (
    N_CH, DensityOperator, DetectionOperator, Liouvillian, charged_steady_state,
    detection_operator, liouvillian, snap_zero_modes, superop_stack, vec,
)
from .params import DeviceParams
from .polarization import AnalyzerBasis, JonesVector
from .spin_system import ELECTRON_PAULI, HOLE_PAULI, NoiseSample, P_TRION, build_model

# eigen-reconstruction residual above which a sample falls back to expm
RECON_TOL = 1e-8


def _commutator_generator(x: np.ndarray) -> np.ndarray:
    return superop_stack(x[:N_CH, :N_CH], None)


class Ensemble:
    """All frozen-noise samples at one (laser energy, drive amplitude).

    Parameters
    ----------
    params : DeviceParams
    omega_laser : float
        Laser energy in ueV (frame of the mean QD energy).
    alpha_in : float
        Input amplitude in sqrt(1/ns).
    samples : list of NoiseSample
    """

    def __init__(self, params: DeviceParams, omega_laser: float, alpha_in: float, samples,
                 spectral: bool = True):
        if not samples:
            raise ValueError("empty sample set")
        self.params = params
        self.omega_laser = float(omega_laser)
        self.alpha_in = float(alpha_in)
        self.samples = list(samples)
        w = np.array([s.weight for s in self.samples], dtype=float)
        if not np.all(w > 0):
            raise ValueError("sample weights must be positive")
        # subsets of a quadrature set are renormalized
        self.weights = w / w.sum()
        base = build_model(params, omega_laser, alpha_in, NoiseSample())
        self.base_model = base
        self.response = base.response
        self.driven = base.driven
        self.l0 = liouvillian(base).charged_block
        self.ls = self._stack()
        self.rho_c = self._steady_states()
        self.method = "eig"
        self.fallback = np.zeros(len(self.samples), dtype=bool)
        if spectral:
            self._diagonalize()

    def _stack(self):
        hb = self.params.hbar
        off = np.array([s.qd_offset for s in self.samples])
        bn = np.array([s.overhauser for s in self.samples], dtype=float)
        gens = [_commutator_generator(P_TRION / hb)]
        coefs = [off]
        r = self.params.hole_hyperfine_ratio
        for i in range(3):
            gens.append(_commutator_generator(ELECTRON_PAULI[i] / (2 * hb)))
            coefs.append(bn[:, i])
            if r:
                gens.append(_commutator_generator(r * HOLE_PAULI[i] / (2 * hb)))
                coefs.append(bn[:, i])
        coefs = np.stack(coefs, axis=1)
        return self.l0[None] + np.tensordot(coefs, np.stack(gens), axes=(1, 0))

    def _steady_states(self):
        n = N_CH * N_CH
        if not self.driven:
            return np.array([charged_steady_state(l, driven=False) for l in self.ls])
        a = self.ls.copy()
        a[:, 0, :] = vec(np.eye(N_CH)).real
        rhs = np.zeros((len(a), n), dtype=complex)
        rhs[:, 0] = 1.0
        v = np.linalg.solve(a, rhs[..., None])[..., 0]
        rho = v.reshape(-1, N_CH, N_CH)
        rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
        return rho / np.real(np.trace(rho, axis1=1, axis2=2))[:, None, None]

    def _diagonalize(self):
        lam, r = np.linalg.eig(self.ls)
        lam = snap_zero_modes(lam, self.ls)
        try:
            rinv = np.linalg.inv(r)
        except np.linalg.LinAlgError:
            rinv = np.array([np.linalg.pinv(x) for x in r])
        recon = (r * lam[:, None, :]) @ rinv
        scale = np.max(np.abs(self.ls), axis=(1, 2))
        err = np.max(np.abs(recon - self.ls), axis=(1, 2)) / scale
        self.fallback = ~(err < RECON_TOL)
        if self.fallback.any():
            self.method = "eig+expm"
        self.lam, self.right, self.right_inv = lam, r, rinv

    # --- per-sample objects (mostly for tests and the trajectory oracle) ---
    def liouvillian(self, i: int) -> Liouvillian:
        return liouvillian(build_model(self.params, self.omega_laser, self.alpha_in, self.samples[i]))

    def steady_state(self, i: int) -> DensityOperator:
        p = self.params.p_charged
        rho = np.zeros((5, 5), dtype=complex)
        rho[:4, :4] = p * self.rho_c[i]
        rho[4, 4] = 1 - p
        return DensityOperator(rho)

    # --- observables -------------------------------------------------------
    def detection_pair(self, basis: AnalyzerBasis):
        return (detection_operator(self.response, basis.jones_x, "x"),
                detection_operator(self.response, basis.jones_xbar, "xbar"))

    def rates(self, d: DetectionOperator) -> np.ndarray:
        """Per-sample count rates Tr[D rho D^dag] in 1/ns."""
        p = self.params.p_charged
        dc = d.matrix[:N_CH, :N_CH]
        m = dc[None] @ self.rho_c @ dc.conj().T[None]
        return p * np.real(np.trace(m, axis1=1, axis2=2)) + (1 - p) * abs(d.background) ** 2

    def intensity(self, analyzer: JonesVector) -> float:
        """Sample-averaged output intensity normalized by the input flux."""
        d = detection_operator(self.response, analyzer)
        return float(self.weights @ self.rates(d)) / self.alpha_in ** 2

    def correlation_parts(self, d_x: DetectionOperator, d_xbar: DetectionOperator) -> "CorrelationParts":
        p = self.params.p_charged
        dc = d_x.matrix[:N_CH, :N_CH]
        v0 = (dc[None] @ self.rho_c @ dc.conj().T[None]).reshape(len(self.samples), -1)
        mb = d_xbar.matrix.conj().T @ d_xbar.matrix
        w = vec(mb[:N_CH, :N_CH].T.copy())
        amp = np.einsum("j,sjk->sk", w, self.right) * np.einsum("skj,sj->sk", self.right_inv, v0)
        amp = p * amp * self.weights[:, None]
        const = (1 - p) * abs(d_x.background) ** 2 * abs(d_xbar.background) ** 2
        fb = None
        if self.fallback.any():
            amp[self.fallback] = 0.0
            idx = np.nonzero(self.fallback)[0]
            fb = (idx, w, v0[idx] * (p * self.weights[idx])[:, None])
        return CorrelationParts(
            lam=self.lam, amp=amp, const=const,
            rate_x=float(self.weights @ self.rates(d_x)),
            rate_xbar=float(self.weights @ self.rates(d_xbar)),
            fallback=fb, ls=self.ls, method=self.method,
        )


def numerators(parts_list, taus) -> np.ndarray:
    """Numerators of several bases sharing one ensemble, one exponential pass."""
    taus = np.asarray(taus, dtype=float)
    lam = parts_list[0].lam
    amps = np.stack([p.amp.ravel() for p in parts_list])
    out = np.real(kernels.exp_sum(amps, lam.ravel(), taus))
    for row, p in zip(out, parts_list):
        row += p.const
        if p.fallback is not None:
            row += p._fallback_only(taus)
    return out


class CorrelationParts:
    """Separately averaged numerator modes and singles rates of one basis."""

    def __init__(self, lam, amp, const, rate_x, rate_xbar, fallback=None, ls=None, method="eig"):
        self.lam = lam
        self.amp = amp
        self.const = const
        self.rate_x = rate_x
        self.rate_xbar = rate_xbar
        self.fallback = fallback
        self.ls = ls
        self.method = method

    @property
    def norm(self) -> float:
        return self.rate_x * self.rate_xbar

    def numerator(self, taus) -> np.ndarray:
        taus = np.asarray(taus, dtype=float)
        h = np.diff(taus)
        if taus.size > 2 and taus[0] == 0 and np.allclose(h, h[0], rtol=1e-9, atol=0):
            dt = taus[-1] / (taus.size - 1)
            s = kernels.exp_sum_uniform(self.amp.ravel(), self.lam.ravel(), float(dt), taus.size)
        else:
            s = kernels.exp_sum(self.amp.ravel(), self.lam.ravel(), taus)
        out = np.real(s) + self.const
        if self.fallback is not None:
            idx, w, v0 = self.fallback
            for i, v in zip(idx, v0):
                out += np.real([w @ (scipy.linalg.expm(self.ls[i] * t) @ v) for t in taus])
        return out

    def numerator_binned(self, edges) -> np.ndarray:
        """Numerator averaged over each [edges[i], edges[i+1]) bin, exactly."""
        edges = np.asarray(edges, dtype=float)
        lam = self.lam.ravel()
        amp = self.amp.ravel()
        small = np.abs(lam) < 1e-9
        safe = np.where(small, 1.0, lam)
        # integral of exp(lam t) is (exp(lam t) - 1)/lam, returned via exp_sum on the edges
        prim = np.real(kernels.exp_sum(np.where(small, 0, amp / safe), lam, edges))
        prim += np.real(np.sum(amp[small])) * edges
        width = np.diff(edges)
        out = np.diff(prim) / width + self.const
        if self.fallback is not None:
            # trapezoid fallback on a fine sub-grid
            for k in range(len(width)):
                sub = np.linspace(edges[k], edges[k + 1], 33)
                vals = self._fallback_only(sub)
                out[k] += np.trapezoid(vals, sub) / width[k]
        return out

    def _fallback_only(self, taus):
        idx, w, v0 = self.fallback
        out = np.zeros(len(taus))
        for i, v in zip(idx, v0):
            out += np.real([w @ (scipy.linalg.expm(self.ls[i] * t) @ v) for t in taus])
        return out

    def g2(self, taus) -> np.ndarray:
        return self.numerator(taus) / self.norm

    def slow_c0(self, rate_cut: float) -> float:
        """Zero-delay extrapolation of the modes slower than ``rate_cut`` (1/ns).

        This is the spin-memory part of C(0): the optical transient living on
        the trion lifetime is excluded.
        """
        slow = np.abs(self.lam.real) < rate_cut
        num = np.real(np.sum(self.amp[slow])) + self.const
        return 1.0 - num / self.norm

    def plateau(self) -> float:
        """Long-delay limit of C = 1 - g2.

        Nonzero under frozen noise: 1 - <r_x r_xbar> / (<r_x><r_xbar>) over
        samples and the empty-dot sector.
        """
        still = np.abs(self.lam) < 1e-9
        return float(1.0 - (np.real(np.sum(self.amp[still])) + self.const) / self.norm)

    def correlation_time(self, rate_cut: float) -> float:
        """Integral of the slow part of C(tau) over its zero-delay value (ns)."""
        slow = (np.abs(self.lam.real) < rate_cut) & (np.abs(self.lam) > 1e-9)
        # decaying slow part: C(tau) = -sum_k amp_k exp(lam_k tau) / norm
        c0 = -np.real(np.sum(self.amp[slow])) / self.norm
        area = np.real(np.sum(self.amp[slow] / self.lam[slow])) / self.norm
        return float(area / c0) if c0 != 0 else float("nan")
