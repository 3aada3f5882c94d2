"""Five-level charged-QD model for one frozen noise realization.

Basis order: 0 = hole up, 1 = hole down, 2 = trion up, 3 = trion down,
4 = empty dot. The up transition (0 <-> 2) couples to (H + iV)/sqrt(2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cavity
from .params import DeviceParams

LABELS = {"up": 0, "down": 1, "trion_up": 2, "trion_down": 3, "empty": 4}
N_LEVELS = 5
CHARGED = np.arange(4)


def ket(i: int, n: int = N_LEVELS) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    v[i] = 1.0
    return v


def op(i: int, j: int, n: int = N_LEVELS) -> np.ndarray:
    """|i><j|"""
    m = np.zeros((n, n), dtype=complex)
    m[i, j] = 1.0
    return m


SIGMA_UP = op(0, 2)
SIGMA_DOWN = op(1, 3)
P_TRION = op(2, 2) + op(3, 3)
P_CHARGED = np.diag([1, 1, 1, 1, 0]).astype(complex)
P_EMPTY = op(4, 4)

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _embed(block: np.ndarray, offset: int) -> np.ndarray:
    m = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    m[offset:offset + 2, offset:offset + 2] = block
    return m


ELECTRON_PAULI = tuple(_embed(p, 2) for p in _PAULI)
HOLE_PAULI = tuple(_embed(p, 0) for p in _PAULI)


@dataclass(frozen=True)
class NoiseSample:
    overhauser: tuple = (0.0, 0.0, 0.0)
    qd_offset: float = 0.0
    weight: float = 1.0


@dataclass
class SystemModel:
    hamiltonian: np.ndarray            # ueV, laser rotating frame
    collapse_ops: list                 # sqrt(1/ns)
    channels: list                     # one name per collapse op
    response: cavity.LinearResponse
    params: DeviceParams
    sample: NoiseSample
    labels: dict = field(default_factory=lambda: dict(LABELS))

    @property
    def driven(self) -> bool:
        return self.response.alpha_in > 0 and self.params.g > 0

    def ops_for(self, prefix: str) -> list:
        return [c for c, n in zip(self.collapse_ops, self.channels) if n.startswith(prefix)]


def build_model(params: DeviceParams, omega_laser: float, alpha_in: float,
                sample: NoiseSample | None = None) -> SystemModel:
    sample = sample or NoiseSample()
    hb = params.hbar
    bn = np.asarray(sample.overhauser, dtype=float)
    lr = cavity.detection_coefficients(params, omega_laser, alpha_in)
    pd = cavity.purcell_and_drive(params, omega_laser, alpha_in)
    _, lamb = cavity.self_energy(params, omega_laser)

    dh, de = params.delta_hole, params.delta_electron
    h = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    # E(up) = -dh/2 so the up transition sits dz/2 above the mean
    h -= 0.5 * dh * HOLE_PAULI[2]
    if params.hole_hyperfine_ratio:
        h += 0.5 * params.hole_hyperfine_ratio * sum(b * s for b, s in zip(bn, HOLE_PAULI))
    trion = params.omega_qd_mean + sample.qd_offset - omega_laser + float(lamb)
    h += trion * P_TRION
    field_e = bn + np.array([0.0, 0.0, de])
    h += 0.5 * sum(b * s for b, s in zip(field_e, ELECTRON_PAULI))
    drive = pd.rabi_up * op(2, 0) + pd.rabi_down * op(3, 1)
    h += drive + drive.conj().T

    cops, names = [], []
    for m, mode in enumerate("HV"):
        cops.append(lr.c_minus[m] * SIGMA_UP + lr.c_plus[m] * SIGMA_DOWN)
        names.append(f"collected_{mode}")
    if params.eta_top < 1:
        unc = cavity.uncollected_patterns(params, omega_laser)
        for m, mode in enumerate("HV"):
            cops.append(unc["up"][m] * SIGMA_UP + unc["down"][m] * SIGMA_DOWN)
            names.append(f"lost_cavity_{mode}")
    if params.gamma_sp > 0:
        s = np.sqrt(params.gamma_sp / hb)
        cops += [s * SIGMA_UP, s * SIGMA_DOWN]
        names += ["lost_free_up", "lost_free_down"]
    if params.gamma_star > 0:
        cops.append(np.sqrt(2 * params.gamma_star / hb) * P_TRION)
        names.append("dephasing")
    if np.isfinite(params.tau_e):
        s = np.sqrt(1.0 / (4.0 * params.tau_e))
        for ax, p in zip("xyz", ELECTRON_PAULI):
            cops.append(s * p)
            names.append(f"electron_relax_{ax}")
    if params.hole_relaxation_rate > 0:
        s = np.sqrt(params.hole_relaxation_rate / 4.0)
        for ax, p in zip("xyz", HOLE_PAULI):
            cops.append(s * p)
            names.append(f"hole_relax_{ax}")
    return SystemModel(h, cops, names, lr, params, sample)


def sample_noise(params: DeviceParams, n_overhauser: int, n_wandering: int,
                 seed: int = 0) -> list:
    """Tensor product of Monte Carlo Overhauser draws and Gauss-Hermite nodes.

    Overhauser components are i.i.d. N(0, gamma_e^2) per axis. Wandering
    offsets use an ``n_wandering``-point Gauss-Hermite rule for
    N(0, sigma_sw^2). Zero-width distributions collapse to one node.
    """
    if n_overhauser < 1 or n_wandering < 1:
        raise ValueError("sample counts must be >= 1")
    if params.gamma_e == 0:
        fields = np.zeros((1, 3))
    else:
        rng = np.random.default_rng(seed)
        fields = rng.normal(0.0, params.gamma_e, size=(n_overhauser, 3))
    if params.sigma_sw == 0 or n_wandering == 1:
        nodes, wts = np.zeros(1), np.ones(1)
    else:
        x, w = np.polynomial.hermite_e.hermegauss(n_wandering)
        nodes, wts = params.sigma_sw * x, w / w.sum()
    w_o = 1.0 / len(fields)
    out = []
    for b in fields:
        for x, w in zip(nodes, wts):
            out.append(NoiseSample(tuple(float(c) for c in b), float(x), float(w_o * w)))
    return out


def stationary_mixture(rho_charged: np.ndarray, p_charged: float) -> np.ndarray:
    rho_charged = np.asarray(rho_charged, dtype=complex)
    if rho_charged.shape != (4, 4):
        raise ValueError("charged state must be 4x4")
    if not np.allclose(rho_charged, rho_charged.conj().T, atol=1e-10):
        raise ValueError("charged state not Hermitian")
    if abs(np.trace(rho_charged) - 1) > 1e-10:
        raise ValueError("charged state trace != 1")
    if np.linalg.eigvalsh(rho_charged).min() < -1e-8:
        raise ValueError("charged state not positive")
    if not 0 <= p_charged <= 1:
        raise ValueError("p_charged must lie in [0, 1]")
    rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    rho[:4, :4] = p_charged * rho_charged
    rho[4, 4] = 1 - p_charged
    return rho
