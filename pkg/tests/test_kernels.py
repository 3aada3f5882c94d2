import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinnoise import kernels
from spinnoise.evolution import detection_operator
from spinnoise.params import DeviceParams, power_to_alpha
from spinnoise.polarization import analyzer_basis
from spinnoise.spin_system import NoiseSample, build_model
from spinnoise.trajectories import unraveling

py = kernels.python_kernels
cy = kernels.compiled_kernels
needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def _modes(rng, k):
    lam = -rng.uniform(1e-3, 5, k) + 1j * rng.normal(0, 2, k)
    amp = rng.normal(size=k) + 1j * rng.normal(size=k)
    return amp, lam


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (cy is not None)


def test_python_exp_sum_matches_direct_sum():
    rng = np.random.default_rng(0)
    amp, lam = _modes(rng, 30)
    taus = np.linspace(0, 10, 50)
    ref = (amp[None, :] * np.exp(np.outer(taus, lam))).sum(axis=1)
    assert py.exp_sum(amp, lam, taus) == pytest.approx(ref, rel=1e-12, abs=1e-12)
    uni = py.exp_sum_uniform(amp, lam, taus[1], taus.size)
    assert uni == pytest.approx(ref, rel=1e-9, abs=1e-10)


def test_python_histogram_matches_brute_force():
    rng = np.random.default_rng(1)
    x, xb = np.sort(rng.uniform(0, 100, 300)), np.sort(rng.uniform(0, 100, 300))
    edges = np.array([0, 0.5, 1, 3, 10, 40.0])
    d = xb[None, :] - x[:, None]
    ref = np.histogram(d[d >= 0], bins=edges)[0]
    assert np.array_equal(py.coincidence_histogram(x, xb, edges), ref)


@needs_ext
@given(st.integers(1, 60), st.integers(0, 2 ** 32 - 1))
def test_exp_sum_parity(k, seed):
    rng = np.random.default_rng(seed)
    amp, lam = _modes(rng, k)
    taus = np.concatenate([[0], np.logspace(-2, 3, 80)])
    assert cy.exp_sum(amp, lam, taus) == pytest.approx(py.exp_sum(amp, lam, taus), rel=1e-10, abs=1e-12)
    a = cy.exp_sum_uniform(amp, lam, 0.37, 500)
    b = py.exp_sum_uniform(amp, lam, 0.37, 500)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-11)


@needs_ext
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 2000), st.integers(0, 2000))
def test_histogram_parity(seed, nx, nxb):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 1e3, nx))
    xb = np.sort(rng.uniform(0, 1e3, nxb))
    edges = np.array([0, 0.5, 1, 2, 5, 10, 50, 200.0])
    assert np.array_equal(cy.coincidence_histogram(x, xb, edges), py.coincidence_histogram(x, xb, edges))


@needs_ext
def test_histogram_parity_on_ties():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    xb = np.array([0.0, 1.0, 1.5, 2.0, 3.0])
    edges = np.array([0.0, 0.5, 1.0, 2.0])
    assert np.array_equal(cy.coincidence_histogram(x, xb, edges), py.coincidence_histogram(x, xb, edges))


@needs_ext
@pytest.mark.parametrize("theta", [0.0, 0.9])
def test_mcwf_parity(theta):
    p = DeviceParams()
    m = build_model(p, 0.0, power_to_alpha(4.0, p), NoiseSample((0.2, -0.1, 0.3), 0.5))
    b = analyzer_basis(theta)
    dx, dxb = detection_operator(m.response, b.jones_x), detection_operator(m.response, b.jones_xbar)
    u = unraveling(m, dx, dxb)
    psi0 = np.eye(5, dtype=complex)[0]
    rec = np.array([1.0, 10.0, 100.0, 1000.0])
    out_c = cy.mcwf_stream(u.mu, u.right, u.right_inv, u.jumps, u.channel, psi0, 2e4,
                           np.random.default_rng(5), rec)
    out_p = py.mcwf_stream(u.mu, u.right, u.right_inv, u.jumps, u.channel, psi0, 2e4,
                           np.random.default_rng(5), rec)
    assert out_c[0].size == out_p[0].size and out_c[1].size == out_p[1].size
    assert out_c[0] == pytest.approx(out_p[0], rel=1e-9)
    assert out_c[1] == pytest.approx(out_p[1], rel=1e-9)
    assert np.array_equal(out_c[2], out_p[2])
    assert out_c[3] == pytest.approx(out_p[3], abs=1e-9)


def test_environment_variable_forces_fallback():
    env = dict(os.environ, SPINNOISE_PURE_PYTHON="1")
    code = "import spinnoise; print(spinnoise.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
