"""Independent reference computations for the test suite.

Nothing here calls the package's vectorization, eigen-decomposition or
sample-stacking code: Liouvillians are assembled column by column from the
dissipator applied to matrix units, propagators use scipy's expm, and cavity
quantities are typed in from the input-output formulas.
"""
import numpy as np
import scipy.linalg

HBAR = 0.6582119569          # ueV ns
E_CHARGE = 1.602176634e-19


def lindblad_rhs(h, cops, rho):
    """d rho / dt for H in 1/ns and collapse ops in sqrt(1/ns)."""
    out = -1j * (h @ rho - rho @ h)
    for c in cops:
        cd = c.conj().T
        out = out + c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


def liouvillian_by_columns(h, cops):
    """Row-major superoperator built from its action on the matrix units."""
    n = h.shape[0]
    cols = []
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1.0
            cols.append(lindblad_rhs(h, cops, e).reshape(-1))
    return np.array(cols).T


def steady_state_by_nullspace(lmat):
    w, v = np.linalg.eig(lmat)
    k = np.argmin(np.abs(w))
    n = int(round(np.sqrt(lmat.shape[0])))
    rho = v[:, k].reshape(n, n)
    return rho / np.trace(rho)


def reflection(kappa, eta, w_cav, w_laser):
    return 1 - eta * kappa / (1j * (w_cav - w_laser) + kappa / 2)


def purcell_sum(g, kappas, w_cavs, w_qd):
    return sum((g ** 2 / 2) * k / ((w_qd - w) ** 2 + (k / 2) ** 2) for k, w in zip(kappas, w_cavs))


def photon_flux(power_w, energy_ev):
    """Photons per ns."""
    return power_w / (energy_ev * E_CHARGE) * 1e-9


def two_level_excited(omega, gamma, gamma2, delta):
    """Excited population of H = delta |e><e| + omega (|e><g| + h.c.), all in 1/ns.

    gamma is the population decay rate and gamma2 the coherence decay rate.
    """
    return 2 * omega ** 2 * gamma2 / gamma / (delta ** 2 + gamma2 ** 2 + 4 * omega ** 2 * gamma2 / gamma)


def stokes(e_h, e_v):
    i = abs(e_h) ** 2 + abs(e_v) ** 2
    return np.array([abs(e_h) ** 2 - abs(e_v) ** 2,
                     2 * (np.conj(e_h) * e_v).real,
                     2 * (np.conj(e_h) * e_v).imag]) / i


def exp_lorentzian(c0, rate_per_ns, f_mhz):
    """One-sided spectrum (1/MHz) of c0 exp(-rate tau) under S = 2 int C cos."""
    w = 2 * np.pi * f_mhz * 1e-3          # rad/ns
    return 2 * c0 * rate_per_ns / (rate_per_ns ** 2 + w ** 2) * 1e-3


def brute_force_g2(models, weights, p_charged, d_x, d_xbar, taus):
    """Separately averaged g2 from full 25x25 superoperators and expm.

    ``models`` are (hamiltonian [ueV], collapse ops) pairs for each noise
    sample; d_x, d_xbar are 5x5 matrices of the shared detection operators.
    """
    num = np.zeros(len(taus))
    rx = rxb = 0.0
    mb = d_xbar.conj().T @ d_xbar
    for (h, cops), w in zip(models, weights):
        lm = liouvillian_by_columns(h / HBAR, cops)
        # full-space steady state: the charged block is the unique driven kernel
        # vector, the empty level is appended with weight 1 - p
        rho = np.zeros((5, 5), dtype=complex)
        idx = [i * 5 + j for i in range(4) for j in range(4)]
        rc = steady_state_by_nullspace(lm[np.ix_(idx, idx)])
        rho[:4, :4] = p_charged * rc
        rho[4, 4] = 1 - p_charged
        rx += w * np.real(np.trace(d_x @ rho @ d_x.conj().T))
        rxb += w * np.real(np.trace(d_xbar @ rho @ d_xbar.conj().T))
        v0 = (d_x @ rho @ d_x.conj().T).reshape(-1)
        for k, t in enumerate(taus):
            r = (scipy.linalg.expm(lm * t) @ v0).reshape(5, 5)
            num[k] += w * np.real(np.trace(mb @ r))
    return num / (rx * rxb)
