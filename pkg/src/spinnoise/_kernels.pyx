# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same signatures and RNG consumption as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, fabs

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)
    double creal(double complex)
    double cimag(double complex)
    double complex conj(double complex)

DEF NMAX = 8
DEF KMAX = 64
DEF RNG_BLOCK = 4096
DEF MAX_NEWTON = 200
DEF DROP = 40.0


def exp_sum(amp, lam, taus):
    """sum_k amp[..., k] exp(lam[k] tau); amp may be 1-d or 2-d (rows share lam)."""
    amp_a = np.asarray(amp, dtype=complex)
    one = amp_a.ndim == 1
    cdef double complex[:, ::1] a = np.ascontiguousarray(amp_a.reshape(-1, amp_a.shape[amp_a.ndim - 1]))
    cdef double complex[::1] l = np.ascontiguousarray(lam, dtype=complex).ravel()
    t_a = np.ascontiguousarray(taus, dtype=float).ravel()
    cdef double[::1] t = t_a
    cdef Py_ssize_t nr = a.shape[0], nk = a.shape[1], nt = t.shape[0]
    out = np.zeros((nr, nt), dtype=complex)
    cdef double complex[:, ::1] o = out
    cdef bint srt = nt < 2 or bool(np.all(np.diff(t_a) >= 0))
    cdef Py_ssize_t i, j, k, m
    cdef double re, tcut
    cdef double complex e
    with nogil:
        for k in range(nk):
            m = nt
            re = creal(l[k])
            if srt and re < 0:
                # grid is sorted: stop once the mode is below exp(-DROP)
                tcut = -DROP / re
                m = 0
                while m < nt and t[m] <= tcut:
                    m += 1
            for i in range(m):
                e = cexp(l[k] * t[i])
                for j in range(nr):
                    o[j, i] = o[j, i] + a[j, k] * e
    return out[0] if one else out


def exp_sum_uniform(amp, lam, double dt, Py_ssize_t n):
    cdef double complex[::1] a = np.ascontiguousarray(amp, dtype=complex).ravel()
    cdef double complex[::1] l = np.ascontiguousarray(lam, dtype=complex).ravel()
    out = np.zeros(n, dtype=complex)
    cdef double complex[::1] o = out
    cdef Py_ssize_t i, k, m, nk = a.shape[0]
    cdef double complex z, acc
    cdef double re
    with nogil:
        for k in range(nk):
            re = creal(l[k]) * dt
            m = n
            if re < 0 and -DROP / re + 2 < n:
                m = <Py_ssize_t>(-DROP / re) + 2
            z = cexp(l[k] * dt)
            acc = a[k]
            for i in range(m):
                # re-anchor periodically to keep the recurrence error at rounding level
                if i % 256 == 0:
                    acc = a[k] * cexp(l[k] * (i * dt))
                o[i] = o[i] + acc
                acc = acc * z
    return out


def coincidence_histogram(x, xbar, edges):
    """Pairs with xbar - x in [edges[k], edges[k+1]); xbar must be sorted.

    Counts ``#{xbar < x + edges[k]}`` per edge with one monotone pointer per
    edge, comparing exactly as ``searchsorted(xbar, x + e, "left")`` does.
    """
    x_a = np.ascontiguousarray(x, dtype=float)
    if x_a.size > 1 and np.any(np.diff(x_a) < 0):
        x_a = np.sort(x_a)      # counts do not depend on the order of x
    cdef double[::1] xs = x_a
    cdef double[::1] ys = np.ascontiguousarray(xbar, dtype=float)
    cdef double[::1] e = np.ascontiguousarray(edges, dtype=float)
    cdef Py_ssize_t ne = e.shape[0], nx = xs.shape[0], ny = ys.shape[0]
    out = np.zeros(max(ne - 1, 0), dtype=np.int64)
    if ne < 2:
        return out
    cum_a = np.zeros(ne, dtype=np.int64)
    ptr_a = np.zeros(ne, dtype=np.intp)
    cdef long long[::1] cum = cum_a
    cdef Py_ssize_t[::1] ptr = ptr_a
    cdef Py_ssize_t i, k, j
    cdef double lim
    with nogil:
        for i in range(nx):
            for k in range(ne):
                lim = xs[i] + e[k]
                j = ptr[k]
                while j < ny and ys[j] < lim:
                    j += 1
                ptr[k] = j
                cum[k] += j
    return np.diff(cum_a)


cdef class _Uniforms:
    cdef object rng
    cdef double[::1] buf
    cdef int i

    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.random(RNG_BLOCK)
        self.i = 0

    cdef double next(self):
        if self.i == RNG_BLOCK:
            self.buf = self.rng.random(RNG_BLOCK)
            self.i = 0
        cdef double u = self.buf[self.i]
        self.i += 1
        return u


cdef struct Sys:
    int n
    int nk
    double complex mu[NMAX]
    double complex v[NMAX][NMAX]
    double complex gam[NMAX][NMAX]


cdef double state_at(Sys* s, double complex* b, double t, double complex* psi) nogil:
    cdef double complex tmp[NMAX]
    cdef int i, j
    cdef double n2 = 0
    for j in range(s.n):
        tmp[j] = cexp(s.mu[j] * t) * b[j]
    for i in range(s.n):
        psi[i] = 0
        for j in range(s.n):
            psi[i] = psi[i] + s.v[i][j] * tmp[j]
        n2 += creal(psi[i]) * creal(psi[i]) + cimag(psi[i]) * cimag(psi[i])
    return n2


cdef double expect_gam(Sys* s, double complex* psi) nogil:
    cdef int i, j
    cdef double complex acc = 0, row
    for i in range(s.n):
        row = 0
        for j in range(s.n):
            row = row + s.gam[i][j] * psi[j]
        acc = acc + conj(psi[i]) * row
    return creal(acc)


cdef double jump_time(Sys* s, double complex* b, double r, double smax) nogil:
    cdef double complex psi[NMAX]
    cdef double nmax = state_at(s, b, smax, psi)
    if nmax > r:
        return -1.0
    cdef double lo = 0.0, hi = smax, logr = log(r)
    cdef double n, f, rate, snew, sv
    n = state_at(s, b, 0.0, psi)
    rate = expect_gam(s, psi)
    if rate > 0:
        sv = -logr / rate
    else:
        sv = 0.5 * smax
    if not (lo < sv < hi):
        sv = 0.5 * (lo + hi)
    cdef int it
    for it in range(MAX_NEWTON):
        n = state_at(s, b, sv, psi)
        if n <= 0.0:
            hi = sv
            sv = 0.5 * (lo + hi)
            continue
        f = log(n) - logr
        if f > 0:
            lo = sv
        else:
            hi = sv
        if fabs(f) < 1e-13 or hi - lo < 1e-12 * (1.0 + sv):
            return sv
        rate = expect_gam(s, psi) / n
        if rate > 0:
            snew = sv + f / rate
        else:
            snew = 0.5 * (lo + hi)
        if not (lo < snew < hi):
            snew = 0.5 * (lo + hi)
        sv = snew
    return sv


def mcwf_stream(mu, v, vinv, jumps, channel, psi0, double duration, rng, record_times=None):
    mu_a = np.ascontiguousarray(mu, dtype=complex)
    v_a = np.ascontiguousarray(v, dtype=complex)
    vi_a = np.ascontiguousarray(vinv, dtype=complex)
    j_a = np.ascontiguousarray(jumps, dtype=complex)
    ch_a = np.ascontiguousarray(channel, dtype=np.int64)
    cdef int n = mu_a.shape[0], nk = j_a.shape[0]
    if n > NMAX or nk > KMAX:
        raise ValueError("system too large for compiled kernel")
    gam_a = np.einsum("kji,kjl->il", j_a.conj(), j_a)
    cdef double complex[:, ::1] vi = vi_a
    cdef double complex[:, :, ::1] J = j_a
    cdef long long[::1] ch = ch_a
    rec_a = np.asarray(record_times if record_times is not None else [], dtype=float)
    cdef double[::1] rec_t = np.ascontiguousarray(rec_a)
    records = np.zeros((rec_t.shape[0], n), dtype=complex)
    cdef double complex[:, ::1] rec = records
    njumps = np.zeros(nk, dtype=np.int64)
    cdef long long[::1] nj = njumps

    cdef Sys s
    cdef int i, j, k
    s.n = n
    s.nk = nk
    cdef double complex[::1] mv = mu_a
    cdef double complex[:, ::1] vv = v_a
    cdef double complex[:, ::1] gv = gam_a
    for i in range(n):
        s.mu[i] = mv[i]
        for j in range(n):
            s.v[i][j] = vv[i][j]
            s.gam[i][j] = gv[i][j]

    cdef _Uniforms uni = _Uniforms(rng)
    c0, c1 = [], []
    cdef double complex psi[NMAX]
    cdef double complex b[NMAX]
    cdef double complex ph[NMAX]
    cdef double complex jp[KMAX][NMAX]
    cdef double probs[KMAX]
    cdef double nrm = 0, sv, r, t = 0.0, t_next, u, acc, n2
    cdef double complex[::1] p0 = np.ascontiguousarray(psi0, dtype=complex)
    cdef Py_ssize_t ir = 0, nrec = rec_t.shape[0]
    for i in range(n):
        psi[i] = p0[i]
        nrm += creal(psi[i]) * creal(psi[i]) + cimag(psi[i]) * cimag(psi[i])
    nrm = sqrt(nrm)
    for i in range(n):
        psi[i] = psi[i] / nrm

    while True:
        for i in range(n):
            b[i] = 0
            for j in range(n):
                b[i] = b[i] + vi[i, j] * psi[j]
        r = uni.next()
        sv = jump_time(&s, b, r, duration - t)
        t_next = duration if sv < 0 else t + sv
        while ir < nrec and rec_t[ir] <= t_next:
            n2 = sqrt(state_at(&s, b, rec_t[ir] - t, ph))
            for i in range(n):
                rec[ir, i] = ph[i] / n2
            ir += 1
        if sv < 0:
            break
        state_at(&s, b, sv, ph)
        acc = 0
        for k in range(nk):
            probs[k] = 0
            for i in range(n):
                jp[k][i] = 0
                for j in range(n):
                    jp[k][i] = jp[k][i] + J[k, i, j] * ph[j]
                probs[k] += creal(jp[k][i]) * creal(jp[k][i]) + cimag(jp[k][i]) * cimag(jp[k][i])
            acc += probs[k]
        u = uni.next() * acc
        # first k with cumsum(probs)[k] > u, as searchsorted(side="right")
        acc = 0
        k = nk
        for i in range(nk):
            acc += probs[i]
            if acc > u:
                k = i
                break
        if k > nk - 1:
            k = nk - 1
        while probs[k] == 0 and k > 0:
            k -= 1
        nrm = sqrt(probs[k])
        for i in range(n):
            psi[i] = jp[k][i] / nrm
        t = t_next
        nj[k] += 1
        if ch[k] == 0:
            c0.append(t)
        elif ch[k] == 1:
            c1.append(t)
    return np.array(c0), np.array(c1), njumps, records
