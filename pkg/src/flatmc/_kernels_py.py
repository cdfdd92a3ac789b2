"""Pure-Python twin of the compiled chain kernel (same signatures)."""

from __future__ import annotations

import math

import numpy as np


def _hermite(a, f, df, step, n):
    u = (a + 1.0) / step
    j = min(max(int(math.floor(u)), 0), n - 2)
    t = u - j
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * f[j] + (t3 - 2 * t2 + t) * step * df[j]
            + (-2 * t3 + 3 * t2) * f[j + 1] + (t3 - t2) * step * df[j + 1])


def mixture_eval_iso(x, means, logw, prec):
    D = x[None, :] - means
    e = logw - 0.5 * prec * np.einsum("kd,kd->k", D, D)
    emax = e.max()
    p = np.exp(e - emax)
    tot = p.sum()
    grad = (p * prec) @ D / tot
    return -(emax + math.log(tot)), grad


def flat_eval_iso(x, means, logw, prec, M, flatten, tables):
    u, g = mixture_eval_iso(x, means, logw, prec)
    if not flatten:
        return u, g
    if u <= M:
        return M + 1.0, np.zeros_like(g)
    if u >= M + 2.0:
        return u, g
    cdf_f, cdf_df, ex_f, ex_df, step = tables
    a = u - M - 1.0
    n = cdf_f.shape[0]
    return M + 1.0 + _hermite(a, ex_f, ex_df, step, n), _hermite(a, cdf_f, cdf_df, step, n) * g


def chain_block(x, grad, vcur, means, logw, prec, M, flatten, tables, h,
                noise, unif, mala, it0, burn_in, thin, out, kept):
    sq = math.sqrt(2.0 * h)
    accepted = 0
    status = -1
    for b in range(noise.shape[0]):
        it = it0 + b + 1
        if mala:
            xi = noise[b]
            y = x - h * grad + sq * xi
            lq_fwd = -0.5 * float(xi @ xi)
            vy, gy = flat_eval_iso(y, means, logw, prec, M, flatten, tables)
            if not math.isfinite(vy):
                status = it
                break
            r = x - y + h * gy
            lq_bwd = -0.25 / h * float(r @ r)
            la = vcur[0] - vy + lq_bwd - lq_fwd
            if la >= 0.0 or math.log(unif[b]) < la:
                accepted += 1
                vcur[0] = vy
                x[:] = y
                grad[:] = gy
        else:
            x[:] = x - h * grad + sq * noise[b]
            v, g = flat_eval_iso(x, means, logw, prec, M, flatten, tables)
            vcur[0] = v
            grad[:] = g
            if not math.isfinite(v):
                status = it
                break
        if it > burn_in and (it - burn_in) % thin == 0:
            out[kept] = x
            kept += 1
    return kept, accepted, status
