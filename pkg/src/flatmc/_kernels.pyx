# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Langevin chain blocks for isotropic Gaussian mixtures.

Mirrors ``_kernels_py`` line for line; the Python wrapper in ``kernels``
selects whichever is importable.
"""

from libc.math cimport exp, log, sqrt, floor, isfinite

import numpy as np


cdef inline double hermite(double a, const double[::1] f, const double[::1] df,
                           double step, Py_ssize_t n) noexcept nogil:
    cdef double u = (a + 1.0) / step
    cdef Py_ssize_t j = <Py_ssize_t>floor(u)
    if j > n - 2:
        j = n - 2
    if j < 0:
        j = 0
    cdef double t = u - j
    cdef double t2 = t * t
    cdef double t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * f[j] + (t3 - 2 * t2 + t) * step * df[j]
            + (-2 * t3 + 3 * t2) * f[j + 1] + (t3 - t2) * step * df[j + 1])


cdef double mix_eval(const double[::1] x, const double[:, ::1] means,
                     const double[::1] logw, const double[::1] prec,
                     double[::1] grad, double[::1] work) noexcept nogil:
    cdef Py_ssize_t K = means.shape[0], d = means.shape[1], k, i
    cdef double q, diff, emax = -1e308, tot = 0.0, p
    for k in range(K):
        q = 0.0
        for i in range(d):
            diff = x[i] - means[k, i]
            q += diff * diff
        work[k] = logw[k] - 0.5 * prec[k] * q
        if work[k] > emax:
            emax = work[k]
    for i in range(d):
        grad[i] = 0.0
    for k in range(K):
        p = exp(work[k] - emax)
        tot += p
        p *= prec[k]
        if p != 0.0:
            for i in range(d):
                grad[i] += p * (x[i] - means[k, i])
    for i in range(d):
        grad[i] /= tot
    return -(emax + log(tot))


cdef double flat_eval(const double[::1] x, const double[:, ::1] means,
                      const double[::1] logw, const double[::1] prec,
                      double M, int flatten,
                      const double[::1] cdf_f, const double[::1] cdf_df,
                      const double[::1] ex_f, const double[::1] ex_df, double tab_step,
                      double[::1] grad, double[::1] work) noexcept nogil:
    cdef double u = mix_eval(x, means, logw, prec, grad, work)
    cdef Py_ssize_t i, d = x.shape[0], n = cdf_f.shape[0]
    cdef double a, s
    if not flatten:
        return u
    if u <= M:
        for i in range(d):
            grad[i] = 0.0
        return M + 1.0
    if u >= M + 2.0:
        return u
    a = u - M - 1.0
    s = hermite(a, cdf_f, cdf_df, tab_step, n)
    for i in range(d):
        grad[i] *= s
    return M + 1.0 + hermite(a, ex_f, ex_df, tab_step, n)


def mixture_eval_iso(x, means, logw, prec):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=float)
    cdef double[::1] g = np.empty(xv.shape[0])
    cdef double[::1] w = np.empty(means.shape[0])
    u = mix_eval(xv, np.ascontiguousarray(means, dtype=float),
                 np.ascontiguousarray(logw, dtype=float),
                 np.ascontiguousarray(prec, dtype=float), g, w)
    return u, np.asarray(g)


def flat_eval_iso(x, means, logw, prec, double M, int flatten, tables):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=float)
    cdef double[::1] g = np.empty(xv.shape[0])
    cdef double[::1] w = np.empty(means.shape[0])
    cdf_f, cdf_df, ex_f, ex_df, tab_step = tables
    v = flat_eval(xv, means, logw, prec, M, flatten, cdf_f, cdf_df, ex_f, ex_df,
                  tab_step, g, w)
    return v, np.asarray(g)


def chain_block(double[::1] x, double[::1] grad, double[::1] vcur,
                const double[:, ::1] means, const double[::1] logw, const double[::1] prec,
                double M, int flatten, tables, double h,
                const double[:, ::1] noise, const double[::1] unif, int mala,
                long it0, long burn_in, long thin, double[:, ::1] out, long kept):
    """Advance one block of ULA or MALA steps in place.

    Returns (kept, accepted, status) with status = -1 on success or the
    1-based iteration at which the state became non-finite.
    """
    cdef const double[::1] cdf_f = tables[0]
    cdef const double[::1] cdf_df = tables[1]
    cdef const double[::1] ex_f = tables[2]
    cdef const double[::1] ex_df = tables[3]
    cdef double tab_step = tables[4]
    cdef Py_ssize_t B = noise.shape[0], d = x.shape[0], b, i
    cdef double[::1] y = np.empty(d)
    cdef double[::1] gy = np.empty(d)
    cdef double[::1] work = np.empty(means.shape[0])
    cdef double sq = sqrt(2.0 * h), vy, r, lq_fwd, lq_bwd, la
    cdef long it, accepted = 0, status = -1
    with nogil:
        for b in range(B):
            it = it0 + b + 1
            if mala:
                lq_fwd = 0.0
                for i in range(d):
                    y[i] = x[i] - h * grad[i] + sq * noise[b, i]
                    lq_fwd += noise[b, i] * noise[b, i]
                lq_fwd *= -0.5
                vy = flat_eval(y, means, logw, prec, M, flatten, cdf_f, cdf_df, ex_f, ex_df,
                               tab_step, gy, work)
                if not isfinite(vy):
                    status = it
                    break
                lq_bwd = 0.0
                for i in range(d):
                    r = x[i] - y[i] + h * gy[i]
                    lq_bwd += r * r
                lq_bwd *= -0.25 / h
                la = vcur[0] - vy + lq_bwd - lq_fwd
                if la >= 0.0 or log(unif[b]) < la:
                    accepted += 1
                    vcur[0] = vy
                    for i in range(d):
                        x[i] = y[i]
                        grad[i] = gy[i]
            else:
                for i in range(d):
                    x[i] = x[i] - h * grad[i] + sq * noise[b, i]
                vcur[0] = flat_eval(x, means, logw, prec, M, flatten, cdf_f, cdf_df, ex_f,
                                    ex_df, tab_step, grad, work)
                if not isfinite(vcur[0]):
                    status = it
                    break
            if it > burn_in and (it - burn_in) % thin == 0:
                for i in range(d):
                    out[kept, i] = x[i]
                kept += 1
    return kept, accepted, status
