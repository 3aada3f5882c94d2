"""Jones/Stokes algebra and analyzer bases.

Convention used everywhere in the package::

    s_hv = (|e_h|^2 - |e_v|^2) / I
    s_da = 2 Re(conj(e_h) e_v) / I
    s_rl = 2 Im(conj(e_h) e_v) / I

so that D = (H + V)/sqrt(2), A = (H - V)/sqrt(2), R = (H + iV)/sqrt(2) and
L = (H - iV)/sqrt(2) sit at the positive/negative poles of their axes.
Flipping the handedness mirrors s_rl and nothing else.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "JonesVector",
    "StokesVector",
    "AnalyzerBasis",
    "H",
    "V",
    "D",
    "A",
    "R",
    "L",
    "stokes_from_jones",
    "stokes_from_intensities",
    "analyzer_basis",
    "project",
    "poincare_angle_between",
    "DEFAULT_THETA0",
]

DEFAULT_THETA0 = np.deg2rad(23.0)


@dataclass(frozen=True)
class JonesVector:
    e_h: complex
    e_v: complex

    @property
    def intensity(self) -> float:
        return float(abs(self.e_h) ** 2 + abs(self.e_v) ** 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.e_h, self.e_v], dtype=complex)

    def normalized(self) -> "JonesVector":
        n = np.sqrt(self.intensity)
        if n == 0:
            raise ValueError("cannot normalize a zero Jones vector")
        return JonesVector(self.e_h / n, self.e_v / n)

    @classmethod
    def from_array(cls, a) -> "JonesVector":
        a = np.asarray(a, dtype=complex)
        return cls(complex(a[0]), complex(a[1]))


@dataclass(frozen=True)
class StokesVector:
    s_hv: float
    s_da: float
    s_rl: float
    intensity: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.s_hv, self.s_da, self.s_rl])

    @property
    def polarized_norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class AnalyzerBasis:
    theta: float
    theta0: float
    jones_x: JonesVector
    jones_xbar: JonesVector


_S2 = 1 / np.sqrt(2)
H = JonesVector(1.0, 0.0)
V = JonesVector(0.0, 1.0)
D = JonesVector(_S2, _S2)
A = JonesVector(_S2, -_S2)
R = JonesVector(_S2, 1j * _S2)
L = JonesVector(_S2, -1j * _S2)


def stokes_arrays(e_h, e_v):
    """Vectorized Stokes components for arrays of field amplitudes.

    Returns ``(s_hv, s_da, s_rl, intensity)``; entries with zero intensity
    get zero Stokes components.
    """
    e_h = np.asarray(e_h, dtype=complex)
    e_v = np.asarray(e_v, dtype=complex)
    ih = np.abs(e_h) ** 2
    iv = np.abs(e_v) ** 2
    tot = ih + iv
    cross = np.conj(e_h) * e_v
    safe = np.where(tot > 0, tot, 1.0)
    s_hv = np.where(tot > 0, (ih - iv) / safe, 0.0)
    s_da = np.where(tot > 0, 2 * cross.real / safe, 0.0)
    s_rl = np.where(tot > 0, 2 * cross.imag / safe, 0.0)
    return s_hv, s_da, s_rl, tot


def stokes_from_jones(j: JonesVector) -> StokesVector:
    """Stokes vector of a pure field. A zero field maps to a zero vector."""
    s_hv, s_da, s_rl, tot = stokes_arrays(j.e_h, j.e_v)
    return StokesVector(float(s_hv), float(s_da), float(s_rl), float(tot))


def stokes_from_intensities(i_x: float, i_xbar: float) -> float:
    """Normalized intensity difference (I_x - I_xbar)/(I_x + I_xbar)."""
    if i_x < 0 or i_xbar < 0:
        raise ValueError("intensities must be nonnegative")
    tot = i_x + i_xbar
    if tot == 0:
        raise ValueError("no signal")
    return (i_x - i_xbar) / tot


def analyzer_basis(theta: float, theta0: float = DEFAULT_THETA0) -> AnalyzerBasis:
    """Orthogonal analyzer pair in the s_da-s_rl plane.

    ``jones_x`` sits at Poincare azimuth ``theta + theta0`` measured from D
    towards R; ``jones_xbar`` is its antipode. Both are perpendicular to H on
    the sphere.
    """
    phase = np.exp(1j * (theta + theta0))
    x = JonesVector(_S2, _S2 * phase)
    xbar = JonesVector(_S2, -_S2 * phase)
    return AnalyzerBasis(float(theta), float(theta0), x, xbar)


def project(j_state: JonesVector, j_analyzer: JonesVector) -> complex:
    """Amplitude <analyzer|state>."""
    return complex(np.vdot(j_analyzer.as_array(), j_state.as_array()))


def poincare_angle_between(a: StokesVector, b: StokesVector) -> float:
    va = a.as_array()
    vb = b.as_array()
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ValueError("zero-length polarized part")
    c = np.dot(va, vb) / (na * nb)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
