"""Lindblad evolution, detection back-action and two-time correlators.

Density matrices are vectorized row-major, so ``vec(A rho B) = kron(A, B.T) vec(rho)``.
The empty-dot level is dynamically decoupled: its population is a boundary
condition (``1 - p_charged``) and is never changed by the Liouvillian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cavity import LinearResponse
from .polarization import JonesVector
from .spin_system import N_LEVELS, SystemModel, stationary_mixture
from . import kernels

N_CH = 4
_CH_IDX = np.array([i * N_LEVELS + j for i in range(N_CH) for j in range(N_CH)])
ZERO_TOL = 1e-13         # relative to max |L_ij|
EIG_COND_MAX = 1e10


@dataclass
class DensityOperator:
    matrix: np.ndarray

    def check(self, herm_tol=1e-10, trace_tol=1e-10, pos_tol=-1e-8) -> "DensityOperator":
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > herm_tol:
            raise ValueError("density operator not Hermitian")
        if abs(np.trace(m) - 1) > trace_tol:
            raise ValueError("density operator trace != 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < pos_tol:
            raise ValueError("density operator not positive")
        return self

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))


@dataclass
class Liouvillian:
    matrix: np.ndarray     # 25x25, 1/ns
    driven: bool = True

    @property
    def charged_block(self) -> np.ndarray:
        return self.matrix[np.ix_(_CH_IDX, _CH_IDX)]


@dataclass
class DetectionOperator:
    matrix: np.ndarray     # sqrt(1/ns)
    label: str = ""

    @property
    def background(self) -> complex:
        """c-number acting on the empty-dot level."""
        return complex(self.matrix[4, 4])


def superop_stack(h, cops):
    """Vectorized Lindbladian for (optionally batched) H [1/ns] and collapse ops.

    ``h`` has shape (..., n, n); ``cops`` has shape (..., K, n, n).
    """
    h = np.asarray(h, dtype=complex)
    n = h.shape[-1]
    eye = np.eye(n)
    kr = lambda a, b: np.einsum("...ij,...kl->...ikjl", a, b).reshape(a.shape[:-2] + (n * n, n * n))
    hb = np.broadcast_to(eye, h.shape)
    out = -1j * (kr(h, hb) - kr(hb, np.swapaxes(h, -1, -2)))
    if cops is not None and np.size(cops):
        c = np.asarray(cops, dtype=complex)
        cd = np.conj(np.swapaxes(c, -1, -2))
        cdc = np.sum(cd @ c, axis=-3)
        out = out + np.sum(kr(c, np.conj(c)), axis=-3)
        out = out - 0.5 * (kr(cdc, hb) + kr(hb, np.swapaxes(cdc, -1, -2)))
    return out


def liouvillian(model: SystemModel) -> Liouvillian:
    hb = model.params.hbar
    mat = superop_stack(model.hamiltonian / hb, np.array(model.collapse_ops) if model.collapse_ops else None)
    return Liouvillian(mat, driven=model.driven)


def vec(rho):
    return np.asarray(rho).reshape(rho.shape[:-2] + (-1,))


def unvec(v, n=None):
    n = n or int(round(np.sqrt(v.shape[-1])))
    return v.reshape(v.shape[:-1] + (n, n))


def _null_projection(lc: np.ndarray, reference: np.ndarray, tol: float):
    """Spectral projection of ``reference`` onto the kernel of ``lc``.

    Returns (state_vector, kernel_dimension).
    """
    lam, r = np.linalg.eig(lc)
    scale = max(1.0, np.max(np.abs(lam)))
    null = np.abs(lam) < tol * scale
    k = int(null.sum())
    if k == 0:
        k = 1
        null = np.abs(lam) == np.min(np.abs(lam))
    coeffs = np.linalg.solve(r, reference)
    v = r[:, null] @ coeffs[null]
    return v, k


def charged_steady_state(lc: np.ndarray, driven: bool = True, tol: float = 1e-10) -> np.ndarray:
    """Normalized 4x4 stationary state of the charged block.

    With no drive the kernel is degenerate; the maximally mixed charged state
    is then projected onto it (symmetric ground mixture).
    """
    ref = vec(np.eye(N_CH, dtype=complex) / N_CH)
    v, k = _null_projection(lc, ref, tol)
    if k > 1 and driven:
        raise ValueError("non-unique steady state")
    if k == 1:
        # refine the kernel vector with a trace-constrained solve
        a = lc.copy()
        a[0, :] = vec(np.eye(N_CH)).real
        rhs = np.zeros(N_CH * N_CH, dtype=complex)
        rhs[0] = 1.0
        try:
            v = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            pass
    rho = unvec(v, N_CH)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def steady_state(L: Liouvillian, p_charged: float) -> DensityOperator:
    if p_charged == 0:
        rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
        rho[4, 4] = 1.0
        return DensityOperator(rho)
    rc = charged_steady_state(L.charged_block, driven=L.driven)
    return DensityOperator(stationary_mixture(rc, p_charged))


def detection_operator(lr: LinearResponse, analyzer: JonesVector, label: str = "") -> DetectionOperator:
    """Output-field operator projected on ``analyzer``.

    Background (same on every level) plus the two dipole terms.
    """
    x = analyzer.as_array()
    beta = np.vdot(x, lr.background)
    a_up = np.vdot(x, lr.c_minus)
    a_down = np.vdot(x, lr.c_plus)
    d = beta * np.eye(N_LEVELS, dtype=complex)
    d[0, 2] += a_up
    d[1, 3] += a_down
    return DetectionOperator(d, label)


def detection_rate(rho, d) -> float:
    m = d.matrix if isinstance(d, DetectionOperator) else d
    r = rho.matrix if isinstance(rho, DensityOperator) else rho
    return float(np.real(np.trace(m @ r @ m.conj().T)))


def conditional_state(rho: DensityOperator, D: DetectionOperator):
    m = D.matrix @ rho.matrix @ D.matrix.conj().T
    rate = float(np.real(np.trace(m)))
    if rate <= 1e-15:
        raise ValueError("dark analyzer")
    return DensityOperator(m / rate), rate


def snap_zero_modes(lam: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Set numerically-zero eigenvalues to exactly 0.

    Stationary modes of a trace-preserving generator come out of ``eig`` with
    |lambda| ~ 1e-15 * ||L||, which would make the trace drift linearly at
    very long delays.
    """
    scale = np.max(np.abs(matrix), axis=(-2, -1), keepdims=True)[..., 0]
    return np.where(np.abs(lam) < ZERO_TOL * scale, 0.0, lam)


@dataclass
class Propagator:
    """exp(L t) on a vector space, via eigendecomposition or expm fallback."""
    matrix: np.ndarray
    method: str = "eig"

    def __post_init__(self):
        self.lam = self.right = self.right_inv = None
        if self.method == "eig":
            lam, r = np.linalg.eig(self.matrix)
            lam = snap_zero_modes(lam, self.matrix)
            if np.linalg.cond(r) > EIG_COND_MAX:
                self.method = "expm"
            else:
                self.lam, self.right, self.right_inv = lam, r, np.linalg.inv(r)

    def modes(self, w: np.ndarray, v: np.ndarray):
        """Eigenvalues and amplitudes a_k such that w.exp(Lt)v = sum a_k exp(lam_k t)."""
        if self.method != "eig":
            raise RuntimeError("no spectral decomposition available")
        return self.lam, (w @ self.right) * (self.right_inv @ v)

    def apply(self, v: np.ndarray, taus) -> np.ndarray:
        taus = np.asarray(taus, dtype=float)
        if self.method == "eig":
            c = self.right_inv @ v
            return (self.right[None, :, :] * np.exp(np.outer(taus, self.lam))[:, None, :]) @ c
        return np.array([scipy.linalg.expm(self.matrix * t) @ v for t in taus])

    def expectation(self, w: np.ndarray, v: np.ndarray, taus) -> np.ndarray:
        taus = np.asarray(taus, dtype=float)
        if self.method == "eig":
            lam, amp = self.modes(w, v)
            return kernels.exp_sum(amp, lam, taus)
        return np.array([w @ (scipy.linalg.expm(self.matrix * t) @ v) for t in taus])


def _charged(m):
    return m[:N_CH, :N_CH]


def _trace_functional(op):
    """Row vector f with f.vec(rho) = Tr[op rho] on the charged block."""
    return vec(_charged(op).T.copy())


def g2_numerator_modes(L: Liouvillian, rho_ss: DensityOperator, d_x: DetectionOperator,
                       d_xbar: DetectionOperator, prop: Propagator | None = None):
    """Pieces of the regression-theorem numerator for one frozen sample.

    Returns dict with the charged-sector modes (lam, amp), the empty-sector
    constant and both singles rates; every quantity is already weighted by
    the sector populations of ``rho_ss``.
    """
    prop = prop or Propagator(L.charged_block)
    r = rho_ss.matrix
    p = float(np.real(np.trace(_charged(r))))
    dx, dxb = d_x.matrix, d_xbar.matrix
    rate_x = detection_rate(r, dx)
    rate_xb = detection_rate(r, dxb)
    v0 = vec(_charged(dx) @ _charged(r) @ _charged(dx).conj().T)
    w = _trace_functional(dxb.conj().T @ dxb)
    const = (1 - p) * abs(d_x.background) ** 2 * abs(d_xbar.background) ** 2
    out = {"rate_x": rate_x, "rate_xbar": rate_xb, "const": const, "prop": prop, "w": w, "v0": v0}
    if prop.method == "eig":
        out["lam"], out["amp"] = prop.modes(w, v0)
    return out


@dataclass
class G2Result:
    tau: np.ndarray
    g2: np.ndarray
    method: str


def g2_cross(L: Liouvillian, rho_ss: DensityOperator, d_x: DetectionOperator,
             d_xbar: DetectionOperator, tau_grid) -> G2Result:
    tau = np.asarray(tau_grid, dtype=float)
    if np.any(tau < 0) or np.any(np.diff(tau) < 0):
        raise ValueError("tau grid must be nonnegative and sorted")
    parts = g2_numerator_modes(L, rho_ss, d_x, d_xbar)
    if parts["rate_x"] <= 0 or parts["rate_xbar"] <= 0:
        raise ValueError("dark analyzer")
    prop = parts["prop"]
    num = np.real(prop.expectation(parts["w"], parts["v0"], tau)) + parts["const"]
    return G2Result(tau, num / (parts["rate_x"] * parts["rate_xbar"]), prop.method)


def relax_to_steady(L: Liouvillian, rho0: DensityOperator, tau_grid) -> list:
    prop = Propagator(L.matrix)
    vs = prop.apply(vec(rho0.matrix), tau_grid)
    out = []
    for v in vs:
        m = unvec(v, N_LEVELS)
        out.append(DensityOperator(0.5 * (m + m.conj().T)))
    return out


def trace_distance(a, b) -> float:
    a = a.matrix if isinstance(a, DensityOperator) else a
    b = b.matrix if isinstance(b, DensityOperator) else b
    d = a - b
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))
