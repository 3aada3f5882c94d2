"""Linear input-output response of the birefringent two-mode micropillar.

Model (energies in ueV, rates in 1/ns after division by hbar)::

    da_M/dt = -(i(w_M - w_L) + k_M/2)/hbar a_M - i g_M^s/hbar sigma_s + sqrt(eta k_M/hbar) b_in,M
    b_out,M = b_in,M - sqrt(eta k_M/hbar) a_M

with H_int = g_M^s a_M^dag sigma_s + h.c. The up transition (|up> <-> |T_up>)
couples with (g_H, g_V) = (g, i g)/sqrt(2) and the down transition with
(g, -i g)/sqrt(2). Eliminating the cavity in steady state gives, per mode,
the background reflection ``r_M``, the emission pattern
``c_M = i sqrt(eta k_M/hbar) g_M / D_M`` and the drive
``hbar Omega = sum_M conj(g_M) sqrt(eta k_M hbar) alpha_M / D_M`` with
``D_M = i(w_M - w_L) + k_M/2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .params import DeviceParams
from .polarization import JonesVector

SPINS = ("up", "down", "empty")


@dataclass(frozen=True)
class LinearResponse:
    t_bg: np.ndarray       # 2x2 background Jones matrix, scaled by alpha_in
    c_plus: np.ndarray     # emission pattern of the down transition, sqrt(1/ns)
    c_minus: np.ndarray    # emission pattern of the up transition, sqrt(1/ns)
    omega_laser: float
    alpha_in: float = 1.0

    @property
    def background(self) -> np.ndarray:
        """Output field of the bare cavity for the H-polarized drive."""
        return self.t_bg[:, 0]


class PurcellDrive(NamedTuple):
    gamma_purcell: float
    total_decay: float
    rabi_up: complex
    rabi_down: complex


def mode_arrays(params: DeviceParams):
    return (np.array([params.omega_cav_h, params.omega_cav_v]),
            np.array([params.kappa_h, params.kappa_v]))


def dipole_couplings(params: DeviceParams) -> dict:
    """Per-mode (H, V) couplings of each circular transition, in ueV."""
    s = params.g / np.sqrt(2)
    return {"up": np.array([s, 1j * s]), "down": np.array([s, -1j * s])}


def _denominators(params: DeviceParams, omega):
    w, k = mode_arrays(params)
    omega = np.asarray(omega, dtype=float)
    return 1j * (w - omega[..., None]) + k / 2


def empty_cavity_reflection(params: DeviceParams, omega_laser):
    """Reflection coefficients (r_H, r_V) of the cavity without the QD.

    ``omega_laser`` may be an array; the result then has a trailing axis of
    length 2.
    """
    _, k = mode_arrays(params)
    r = 1.0 - params.eta_top * k / _denominators(params, omega_laser)
    return r


def self_energy(params: DeviceParams, omega):
    """Cavity-induced decay rate and energy shift of either transition (ueV).

    Returns ``(gamma_purcell, lamb_shift)`` with the cavity response evaluated
    at ``omega``.
    """
    w, k = mode_arrays(params)
    dm = _denominators(params, omega)
    g2 = params.g ** 2 / 2
    gamma = np.sum(g2 * k / np.abs(dm) ** 2, axis=-1)
    shift = -np.sum(g2 * (w - np.asarray(omega, dtype=float)[..., None]) / np.abs(dm) ** 2, axis=-1)
    return gamma, shift


def purcell_and_drive(params: DeviceParams, omega_laser: float, alpha_in: float = 1.0,
                      qd_offset: float = 0.0) -> PurcellDrive:
    """Purcell rate at the QD energy plus the cavity-fed Rabi amplitudes.

    ``rabi_up``/``rabi_down`` are hbar*Omega in ueV for an H-polarized input
    of amplitude ``alpha_in`` (sqrt(1/ns)).
    """
    gp, _ = self_energy(params, params.omega_qd_mean + qd_offset)
    gp = float(gp)
    dm = _denominators(params, omega_laser)
    _, k = mode_arrays(params)
    alpha = np.array([alpha_in, 0.0])
    feed = np.sqrt(params.eta_top * k * params.hbar) * alpha / dm
    c = dipole_couplings(params)
    rabi_up = complex(np.sum(np.conj(c["up"]) * feed))
    rabi_down = complex(np.sum(np.conj(c["down"]) * feed))
    return PurcellDrive(gp, gp + params.gamma_sp, rabi_up, rabi_down)


def detection_coefficients(params: DeviceParams, omega_laser: float,
                           alpha_in: float = 1.0) -> LinearResponse:
    if alpha_in < 0:
        raise ValueError("alpha_in must be >= 0")
    r = empty_cavity_reflection(params, omega_laser)
    _, k = mode_arrays(params)
    dm = _denominators(params, omega_laser)
    pref = 1j * np.sqrt(params.eta_top * k / params.hbar) / dm
    c = dipole_couplings(params)
    return LinearResponse(
        t_bg=np.diag(r) * alpha_in,
        c_plus=pref * c["down"],
        c_minus=pref * c["up"],
        omega_laser=float(omega_laser),
        alpha_in=float(alpha_in),
    )


def uncollected_patterns(params: DeviceParams, omega_laser: float) -> dict:
    """Emission amplitudes into the lossy (non-top) cavity port, sqrt(1/ns)."""
    _, k = mode_arrays(params)
    dm = _denominators(params, omega_laser)
    pref = 1j * np.sqrt((1 - params.eta_top) * k / params.hbar) / dm
    c = dipole_couplings(params)
    return {"up": pref * c["up"], "down": pref * c["down"]}


def transition_energies(params: DeviceParams, qd_offset: float = 0.0) -> dict:
    base = params.omega_qd_mean + qd_offset
    return {"up": base + params.delta_z / 2, "down": base - params.delta_z / 2}


def conditional_jones(params: DeviceParams, omega_laser: float, spin: str,
                      trion_detuning_offset: float = 0.0) -> JonesVector:
    """Low-power output field for a unit H input, conditioned on the QD state.

    Solves the steady-state linear system for (a_H, a_V, sigma) directly,
    without eliminating the cavity.
    """
    if spin not in SPINS:
        raise ValueError(f"spin must be one of {SPINS}")
    hb = params.hbar
    w, k = mode_arrays(params)
    feed = np.sqrt(params.eta_top * k / hb)
    b_in = np.array([1.0, 0.0], dtype=complex)
    dm = (1j * (w - omega_laser) + k / 2) / hb
    if spin == "empty" or params.g == 0:
        a = feed * b_in / dm
        out = b_in - feed * a
        return JonesVector.from_array(out)
    gm = dipole_couplings(params)[spin] / hb
    e_t = transition_energies(params, trion_detuning_offset)[spin]
    dq = (1j * (e_t - omega_laser) + params.gamma_sp / 2 + params.gamma_star) / hb
    m = np.zeros((3, 3), dtype=complex)
    rhs = np.zeros(3, dtype=complex)
    for i in range(2):
        m[i, i] = dm[i]
        m[i, 2] = 1j * gm[i]
        rhs[i] = feed[i] * b_in[i]
    m[2, 0] = 1j * np.conj(gm[0])
    m[2, 1] = 1j * np.conj(gm[1])
    m[2, 2] = dq
    sol = np.linalg.solve(m, rhs)
    out = b_in - feed * sol[:2]
    return JonesVector.from_array(out)


def conditional_jones_eliminated(params: DeviceParams, omega_laser: float, spin: str,
                                 trion_detuning_offset: float = 0.0) -> JonesVector:
    """Same quantity via the eliminated-cavity coefficients (cross-check path)."""
    lr = detection_coefficients(params, omega_laser, 1.0)
    if spin == "empty" or params.g == 0:
        return JonesVector.from_array(lr.background)
    hb = params.hbar
    pd = purcell_and_drive(params, omega_laser, 1.0)
    gp, shift = self_energy(params, omega_laser)
    e_t = transition_energies(params, trion_detuning_offset)[spin] + shift
    rabi = pd.rabi_up if spin == "up" else pd.rabi_down
    dq = 1j * (e_t - omega_laser) + (gp + params.gamma_sp) / 2 + params.gamma_star
    sigma = -1j * rabi / dq
    pattern = lr.c_minus if spin == "up" else lr.c_plus
    return JonesVector.from_array(lr.background + pattern * sigma)
