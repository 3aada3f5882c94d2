"""Compiled versus pure-Python timings for the hot kernels.

Run from the repository root after building the extension::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each workload is representative of what the package does at default
parameters: correlator numerators on log and uniform grids, one quantum-jump
record, and a coincidence histogram of ~4e5 clicks per channel.
"""
import argparse
import json
import platform
import time

import numpy as np

from spinnoise import kernels
from spinnoise.ensemble import Ensemble
from spinnoise.evolution import detection_operator
from spinnoise.params import DeviceParams, power_to_alpha
from spinnoise.polarization import analyzer_basis
from spinnoise.spin_system import build_model, sample_noise
from spinnoise.trajectories import unraveling


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def workloads():
    p = DeviceParams()
    alpha = power_to_alpha(4.0, p)
    ens = Ensemble(p, 0.0, alpha, sample_noise(p, 40, 5, seed=0))
    parts = ens.correlation_parts(*ens.detection_pair(analyzer_basis(0.0)))
    amp, lam = parts.amp.ravel(), parts.lam.ravel()
    log_grid = np.concatenate([[0.0], np.logspace(-2, 3.5, 999)])
    n_uni, dt = 1 << 14, 4e4 / ((1 << 14) - 1)

    model = build_model(p, 0.0, alpha)
    basis = analyzer_basis(0.0)
    dx = detection_operator(model.response, basis.jones_x, "x")
    dxb = detection_operator(model.response, basis.jones_xbar, "xbar")
    u = unraveling(model, dx, dxb)
    psi0 = np.eye(5, dtype=complex)[0]
    duration = 5e4

    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(0, 4e5, 400000))
    xb = np.sort(rng.uniform(0, 4e5, 400000))
    edges = np.array([0, 0.5, 1, 2, 3, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000.0])

    return {
        "exp_sum (log grid)": lambda k: k.exp_sum(amp, lam, log_grid),
        "exp_sum_uniform (2^14)": lambda k: k.exp_sum_uniform(amp, lam, dt, n_uni),
        "mcwf_stream (50 us)": lambda k: k.mcwf_stream(u.mu, u.right, u.right_inv, u.jumps,
                                                       u.channel, psi0, duration,
                                                       np.random.default_rng(1))[2].sum(),
        "coincidence_histogram (4e5)": lambda k: k.coincidence_histogram(x, xb, edges),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    if kernels.compiled_kernels is None:
        raise SystemExit("compiled extension not available; build it with "
                         "`python3 setup.py build_ext --inplace`")
    rows = []
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}  agree")
    for name, fn in workloads().items():
        tp, op = _best(lambda: fn(kernels.python_kernels), args.repeat)
        tc, oc = _best(lambda: fn(kernels.compiled_kernels), args.repeat)
        agree = bool(np.allclose(op, oc, rtol=1e-9, atol=1e-12))
        rows.append({"kernel": name, "python_s": tp, "cython_s": tc, "speedup": tp / tc,
                     "agree": agree})
        print(f"{name:32s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}  {agree}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"machine": platform.platform(), "results": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
