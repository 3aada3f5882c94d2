"""Pure numpy versions of the hot kernels.

Used when the compiled ``_kernels`` extension is not built. The compiled
module implements the same functions with the same random-number
consumption order, so both produce identical click streams.
"""
import numpy as np

_CHUNK = 1 << 22
RNG_BLOCK = 4096
MAX_NEWTON = 200
DROP = 40.0


def exp_sum(amp, lam, taus):
    """sum_k amp[..., k] * exp(lam[k] * tau) for every tau; amp is 1-d or 2-d."""
    amp = np.asarray(amp, dtype=complex)
    one = amp.ndim == 1
    amp = amp.reshape(-1, amp.shape[-1])
    lam = np.ascontiguousarray(lam, dtype=complex).ravel()
    taus = np.ascontiguousarray(taus, dtype=float).ravel()
    out = np.zeros((amp.shape[0], taus.size), dtype=complex)
    step = max(1, _CHUNK // max(1, taus.size))
    for s in range(0, lam.size, step):
        out += amp[:, s:s + step] @ np.exp(np.outer(lam[s:s + step], taus))
    return out[0] if one else out


def mode_lifetimes(lam, dt, n):
    """Grid points after which each mode is below exp(-DROP); at most n."""
    re = np.asarray(lam).real * dt
    life = np.full(re.shape, int(n), dtype=np.int64)
    dec = re < 0
    life[dec] = np.minimum(np.ceil(-DROP / re[dec]), n).astype(np.int64) + 1
    return np.minimum(life, n)


def exp_sum_uniform(amp, lam, dt, n):
    """exp_sum on the grid k * dt, k = 0..n-1, skipping modes once they are below exp(-DROP)."""
    amp = np.ascontiguousarray(amp, dtype=complex).ravel()
    lam = np.ascontiguousarray(lam, dtype=complex).ravel()
    n = int(n)
    out = np.zeros(n, dtype=complex)
    life = mode_lifetimes(lam, dt, n)
    # bucket modes by lifetime in powers of two; each bucket is summed on its own prefix
    bucket = np.ceil(np.log2(np.maximum(life, 1))).astype(int)
    for b in np.unique(bucket):
        sel = bucket == b
        m = min(n, 1 << int(b))
        out[:m] += exp_sum(amp[sel], lam[sel], np.arange(m) * dt)
    return out


def coincidence_histogram(x, xbar, edges):
    """Counts of pairs with xbar - x in [edges[k], edges[k+1])."""
    x = np.ascontiguousarray(x, dtype=float)
    xbar = np.ascontiguousarray(xbar, dtype=float)
    edges = np.ascontiguousarray(edges, dtype=float)
    cum = np.array([np.searchsorted(xbar, x + e, side="left").sum() for e in edges], dtype=np.int64)
    return np.diff(cum)


class _Uniforms:
    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.random(RNG_BLOCK)
        self.i = 0

    def next(self):
        if self.i == RNG_BLOCK:
            self.buf = self.rng.random(RNG_BLOCK)
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return u


def _norm2(v, mu, b, s):
    psi = v @ (np.exp(mu * s) * b)
    return psi, float(np.real(np.vdot(psi, psi)))


def _jump_time(v, mu, b, gam, r, smax):
    """Time s in (0, smax] where the unnormalized norm^2 reaches r.

    Returns -1 if the norm stays above r up to smax.
    """
    _, nmax = _norm2(v, mu, b, smax)
    if nmax > r:
        return -1.0
    lo, hi = 0.0, smax
    logr = np.log(r)
    psi, n = _norm2(v, mu, b, 0.0)
    rate = float(np.real(np.vdot(psi, gam @ psi)))
    s = -logr / rate if rate > 0 else 0.5 * smax
    if not lo < s < hi:
        s = 0.5 * (lo + hi)
    for _ in range(MAX_NEWTON):
        psi, n = _norm2(v, mu, b, s)
        if n <= 0.0:
            hi = s
            s = 0.5 * (lo + hi)
            continue
        f = np.log(n) - logr
        if f > 0:
            lo = s
        else:
            hi = s
        if abs(f) < 1e-13 or hi - lo < 1e-12 * (1.0 + s):
            return s
        rate = float(np.real(np.vdot(psi, gam @ psi))) / n
        s_new = s + f / rate if rate > 0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        s = s_new
    return s


def mcwf_stream(mu, v, vinv, jumps, channel, psi0, duration, rng, record_times=None):
    """One quantum-jump trajectory with piecewise exact no-jump evolution.

    Parameters
    ----------
    mu, v, vinv : eigen-decomposition of the no-jump generator -i H_eff (1/ns)
    jumps : (K, n, n) jump operators, sqrt(1/ns)
    channel : (K,) int, detector index for each jump op (0, 1) or -1 if unrecorded
    psi0 : (n,) initial state
    duration : ns
    rng : numpy Generator
    record_times : optional sorted times at which the normalized state is stored

    Returns
    -------
    clicks0, clicks1 : arrays of click times
    njumps : (K,) counts per jump operator
    records : (len(record_times), n) states
    """
    mu = np.asarray(mu, dtype=complex)
    v = np.asarray(v, dtype=complex)
    vinv = np.asarray(vinv, dtype=complex)
    jumps = np.asarray(jumps, dtype=complex)
    channel = np.asarray(channel, dtype=np.int64)
    gam = np.einsum("kji,kjl->il", jumps.conj(), jumps)
    rec_t = np.asarray(record_times if record_times is not None else [], dtype=float)
    records = np.zeros((len(rec_t), len(psi0)), dtype=complex)
    ir = 0
    uni = _Uniforms(rng)
    clicks = ([], [])
    njumps = np.zeros(len(jumps), dtype=np.int64)
    psi = np.asarray(psi0, dtype=complex)
    psi = psi / np.sqrt(np.real(np.vdot(psi, psi)))
    t = 0.0
    while True:
        b = vinv @ psi
        r = uni.next()
        s = _jump_time(v, mu, b, gam, r, duration - t)
        t_next = duration if s < 0 else t + s
        while ir < len(rec_t) and rec_t[ir] <= t_next:
            ph, n = _norm2(v, mu, b, rec_t[ir] - t)
            records[ir] = ph / np.sqrt(n)
            ir += 1
        if s < 0:
            break
        ph, _ = _norm2(v, mu, b, s)
        probs = np.array([np.real(np.vdot(j @ ph, j @ ph)) for j in jumps])
        u = uni.next() * probs.sum()
        k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        k = min(k, len(jumps) - 1)
        while probs[k] == 0 and k > 0:
            k -= 1
        psi = jumps[k] @ ph
        psi = psi / np.sqrt(probs[k])
        t = t_next
        njumps[k] += 1
        if channel[k] >= 0:
            clicks[channel[k]].append(t)
    return np.array(clicks[0]), np.array(clicks[1]), njumps, records
