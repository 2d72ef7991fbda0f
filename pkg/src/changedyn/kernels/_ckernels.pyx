# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled particle kernels. Same random stream and arithmetic order as
``_pykernels`` so the two backends agree to rounding."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, log, cos, exp

cnp.import_array()

BACKEND = "cython"

ctypedef unsigned long long u64

cdef u64 C_SEED = 0x9E3779B97F4A7C15ULL
cdef u64 C_INDEX = 0xD1B54A32D192ED03ULL
cdef u64 C_STEP = 0xABC98388FB8FAC03ULL
cdef u64 C_SLOT = 0x8CB92BA72F3D8DD7ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0

SLOT_RESET = 0
SLOT_STATE = 1
SLOT_PHI = 2


cdef inline u64 _mix(u64 z) noexcept nogil:
    z = z ^ (z >> 30)
    z = z * 0xBF58476D1CE4E5B9ULL
    z = z ^ (z >> 27)
    z = z * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline u64 _key(u64 seed, u64 index) noexcept nogil:
    return _mix(_mix(seed + C_SEED) ^ (index * C_INDEX))


cdef inline double _uniform(u64 key, u64 step, u64 slot) noexcept nogil:
    cdef u64 k = _mix(key ^ (step * C_STEP + slot * C_SLOT))
    return (<double>(k >> 11) + 0.5) * INV_2_53


cdef inline double _normal(u64 key, u64 step, u64 slot) noexcept nogil:
    cdef double u1 = _uniform(key, step, slot)
    cdef double u2 = _uniform(key, step, slot + 1)
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


def uniforms(seed, step, slot, index):
    """Scalar-key convenience wrapper matching the numpy backend."""
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64)).ravel()
    out = np.empty(idx.shape[0])
    cdef double[::1] o = out
    cdef long long[::1] iv = idx
    cdef Py_ssize_t i
    cdef u64 s = <u64>seed, st = <u64>step, sl = <u64>slot
    for i in range(iv.shape[0]):
        o[i] = _uniform(_key(s, <u64>iv[i]), st, sl)
    return out


cdef struct Inputs:
    # raw C-contiguous buffers; passing memoryviews per particle would
    # cost an atomic refcount round-trip each
    const double* theta
    const double* phi
    const long long* state
    const long long* runlength
    const double* hazard
    const double* cdf
    const double* lower
    const double* upper
    const double* reset_theta
    bint has_reset
    Py_ssize_t m
    Py_ssize_t nstates
    long long t
    long long tau
    u64 seed
    u64 base
    double* theta_out
    double* phi_out
    long long* state_out
    long long* r_out


cdef void _propose_one(Py_ssize_t i, const Inputs* a) noexcept nogil:
    cdef Py_ssize_t m = a.m, m2 = 2 * a.m
    cdef u64 key = _key(a.seed, a.base + <u64>i)
    cdef u64 step = <u64>(a.t + 1)
    cdef Py_ssize_t k, j
    cdef long long s = a.state[i]
    cdef long long r = a.runlength[i]
    cdef bint reset = 0
    cdef double u, lo, hi, om
    cdef u64 slot_normal = 2 + 2 * <u64>m
    cdef const double* src_theta = a.theta + i * m
    cdef double* th = a.theta_out + i * m
    cdef double* ph = a.phi_out + i * m2

    if r >= a.t - a.tau:
        if _uniform(key, step, 0) < a.hazard[s]:
            reset = 1
    if reset:
        a.r_out[i] = 0
        u = _uniform(key, step, 1)
        j = 0
        while j < a.nstates - 1 and u >= a.cdf[s * a.nstates + j]:
            j += 1
        s = j
        for k in range(m2):
            lo = a.lower[s * m2 + k]
            hi = a.upper[s * m2 + k]
            ph[k] = lo + (hi - lo) * _uniform(key, step, 2 + <u64>k)
        if a.has_reset:
            src_theta = a.reset_theta + s * m
    else:
        a.r_out[i] = r + 1
        for k in range(m2):
            ph[k] = a.phi[i * m2 + k]
    a.state_out[i] = s
    for k in range(m):
        om = _normal(key, step, slot_normal + 2 * <u64>k)
        th[k] = src_theta[k] + ph[k] + ph[m + k] * om


def propose(theta, phi, state, runlength, long long t, long long tau, seed, hazard, trans_cdf,
            lower, upper, reset_theta=None, base=0, int nthreads=1):
    cdef const double[:, ::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[:, ::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const long long[::1] st = np.ascontiguousarray(state, dtype=np.int64)
    cdef const long long[::1] rl = np.ascontiguousarray(runlength, dtype=np.int64)
    cdef const double[::1] hz = np.ascontiguousarray(hazard, dtype=np.float64)
    cdef const double[:, ::1] cdf = np.ascontiguousarray(trans_cdf, dtype=np.float64)
    cdef const double[:, ::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef const double[:, ::1] hi = np.ascontiguousarray(upper, dtype=np.float64)
    cdef bint has_reset = reset_theta is not None
    cdef const double[:, ::1] rt = np.ascontiguousarray(
        reset_theta if has_reset else np.zeros((1, 1)), dtype=np.float64)
    cdef Py_ssize_t n = th.shape[0], m = th.shape[1], i
    theta_out = np.empty((n, m))
    phi_out = np.empty((n, 2 * m))
    state_out = np.empty(n, dtype=np.int64)
    r_out = np.empty(n, dtype=np.int64)
    if n == 0:
        return theta_out, phi_out, state_out, r_out
    cdef double[:, ::1] to = theta_out
    cdef double[:, ::1] po = phi_out
    cdef long long[::1] so = state_out
    cdef long long[::1] ro = r_out
    cdef Inputs a
    a.theta = &th[0, 0]
    a.phi = &ph[0, 0]
    a.state = &st[0]
    a.runlength = &rl[0]
    a.hazard = &hz[0]
    a.cdf = &cdf[0, 0]
    a.lower = &lo[0, 0]
    a.upper = &hi[0, 0]
    a.reset_theta = &rt[0, 0]
    a.has_reset = has_reset
    a.m = m
    a.nstates = cdf.shape[1]
    a.t = t
    a.tau = tau
    a.seed = <u64>seed
    a.base = <u64>base
    a.theta_out = &to[0, 0]
    a.phi_out = &po[0, 0]
    a.state_out = &so[0]
    a.r_out = &ro[0]
    if nthreads > 1:
        for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
            _propose_one(i, &a)
    else:
        with nogil:
            for i in range(n):
                _propose_one(i, &a)
    return theta_out, phi_out, state_out, r_out


cdef inline double _loglik_one(Py_ssize_t i, Py_ssize_t p, const double* th,
                               const double* xw, double x_next) noexcept nogil:
    cdef const double* row = th + i * (p + 2)
    cdef double mean = 0.0
    cdef Py_ssize_t k
    for k in range(p):
        mean = mean + row[k] * xw[k]
    mean = mean + row[p]
    cdef double ls = row[p + 1]
    cdef double z = (x_next - mean) * exp(-ls)
    return -0.9189385332046727 - ls - 0.5 * z * z


def log_likelihood(theta, x_window, double x_next, int nthreads=1):
    cdef const double[:, ::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    xw_arr = np.ascontiguousarray(x_window, dtype=np.float64).reshape(-1)
    if xw_arr.shape[0] == 0:
        xw_arr = np.zeros(1)
    cdef const double[::1] xw = xw_arr
    cdef Py_ssize_t n = th.shape[0], p = th.shape[1] - 2, i
    out = np.empty(n)
    if n == 0:
        return out
    cdef double[::1] o = out
    cdef const double* tp = &th[0, 0]
    cdef const double* xp = &xw[0]
    if nthreads > 1:
        for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
            o[i] = _loglik_one(i, p, tp, xp, x_next)
    else:
        with nogil:
            for i in range(n):
                o[i] = _loglik_one(i, p, tp, xp, x_next)
    return out
