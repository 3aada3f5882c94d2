"""Device parameters of the charged quantum dot / micropillar system.

Energies and rates are in micro-electronvolts, times in nanoseconds. The
frame origin for energies is the mean QD transition energy.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

HBAR = 0.6582119569  # ueV * ns
EV_TO_J = 1.602176634e-19


@dataclass(frozen=True)
class DeviceParams:
    omega_qd_mean: float = 0.0
    delta_z: float = 1.33
    # V is the lower mode; with this ordering the loci symmetry axis sits at +23 deg
    omega_cav_h: float = 1.6 + 37.0
    omega_cav_v: float = 1.6 - 37.0
    kappa_h: float = 420.0
    kappa_v: float = 430.0
    eta_top: float = 0.89
    g: float = 17.5
    gamma_sp: float = 0.9
    gamma_star: float = 0.4
    sigma_sw: float = 2.6
    gamma_e: float = 0.5
    tau_e: float = 70.0
    p_charged: float = 0.75
    zeeman_split_ratio: float = 0.5
    # assumed zero by default; kept as knobs so the assumption is testable
    hole_hyperfine_ratio: float = 0.0
    hole_relaxation_rate: float = 0.0  # 1/ns, isotropic on the ground doublet
    omega_qd_abs_ev: float = 1.3392
    hbar: float = field(default=HBAR)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("kappa_h", "kappa_v"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("eta_top", "p_charged", "zeeman_split_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("g", "gamma_sp", "gamma_star", "sigma_sw", "gamma_e",
                     "hole_hyperfine_ratio", "hole_relaxation_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not self.tau_e > 0:
            raise ValueError(f"tau_e must be > 0 (use inf to disable), got {self.tau_e}")
        if not self.hbar > 0 or not self.omega_qd_abs_ev > 0:
            raise ValueError("hbar and omega_qd_abs_ev must be positive")
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and np.isnan(v):
                raise ValueError(f"{f.name} is NaN")

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown device keys: {', '.join(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    @property
    def delta_hole(self) -> float:
        return (1.0 - self.zeeman_split_ratio) * self.delta_z

    @property
    def delta_electron(self) -> float:
        return self.zeeman_split_ratio * self.delta_z


def power_to_flux(power_pw: float, params: DeviceParams | None = None) -> float:
    """Photon flux in 1/ns for an optical power in pW at the QD energy."""
    params = params or DeviceParams()
    photon_j = params.omega_qd_abs_ev * EV_TO_J
    return power_pw * 1e-12 / photon_j * 1e-9


def power_to_alpha(power_pw: float, params: DeviceParams | None = None) -> float:
    """Input amplitude sqrt(flux) in sqrt(1/ns)."""
    return float(np.sqrt(power_to_flux(power_pw, params)))
