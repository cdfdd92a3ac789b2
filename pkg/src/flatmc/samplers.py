"""Langevin samplers for the flattened proposal and an exact low-d sampler.

Each chain draws its Gaussian increments (and MALA uniforms) from its own
Philox stream keyed by (seed, chain index), in blocks of ``BLOCK`` steps.
Isotropic-mixture targets run through the compiled kernel when available;
anything else goes through a plain Python loop over ``target.eval``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .density import GaussianMixture
from .errors import DivergenceError, EnvelopeError, InputError
from .flatten import FlattenedTarget, FlattenSpec, default_table, t_value_batch

BLOCK = 4096


@dataclass(frozen=True)
class ChainConfig:
    step: float
    steps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    init: tuple | None = None

    def __post_init__(self):
        if not self.step > 0:
            raise InputError("step must be positive")
        if self.steps <= self.burn_in or self.burn_in < 0:
            raise InputError("need steps > burn_in >= 0")
        if self.thin < 1:
            raise InputError("thin must be at least 1")

    @property
    def n_kept(self) -> int:
        return (self.steps - self.burn_in) // self.thin

    def start(self, dim: int) -> np.ndarray:
        if self.init is None:
            return np.zeros(dim)
        x0 = np.asarray(self.init, dtype=float).copy()
        if x0.shape != (dim,):
            raise InputError(f"init has shape {x0.shape}, expected ({dim},)")
        return x0


def chain_rng(seed: int, chain: int = 0) -> np.random.Generator:
    """Counter-based stream for one chain; independent of scheduling."""
    key = (int(seed) % (1 << 64)) | (int(chain) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _kernel_args(target):
    """Arguments for the compiled kernel, or None if the target does not fit."""
    base, M, flatten = target, 0.0, 0
    if isinstance(target, FlattenedTarget):
        base, M, flatten = target.base, target.spec.M, 1
        tab = target.table
    else:
        tab = default_table()
    if not (isinstance(base, GaussianMixture) and base.isotropic):
        return None
    tables = (tab.cdf_values, tab.phi, tab.excess_values, tab.cdf_values, float(tab.step))
    return (np.ascontiguousarray(base.means), np.ascontiguousarray(base.log_w),
            np.ascontiguousarray(base.s), float(M), flatten, tables)


def _run(target, cfg: ChainConfig, chain: int, mala: bool, backend: str | None):
    dim = target.dim
    rng = chain_rng(cfg.seed, chain)
    x = cfg.start(dim)
    out = np.empty((cfg.n_kept, dim))
    args = _kernel_args(target)
    if args is not None:
        impl = kernels.backend(backend)
        means, logw, prec, M, flatten, tables = args
        v, g = impl.flat_eval_iso(x, means, logw, prec, M, flatten, tables)
        grad = np.array(g, dtype=float)
        vcur = np.array([v], dtype=float)
        step_fn = lambda noise, unif, it0, kept: impl.chain_block(
            x, grad, vcur, means, logw, prec, M, flatten, tables, cfg.step, noise, unif,
            int(mala), it0, cfg.burn_in, cfg.thin, out, kept)
    else:
        v, g = target.eval(x)
        grad = np.array(g, dtype=float)
        vcur = np.array([v], dtype=float)
        step_fn = lambda noise, unif, it0, kept: _python_block(
            target, x, grad, vcur, cfg.step, noise, unif, mala, it0, cfg.burn_in, cfg.thin,
            out, kept)
    it0, kept, accepted = 0, 0, 0
    empty = np.empty(0)
    while it0 < cfg.steps:
        B = min(BLOCK, cfg.steps - it0)
        noise = rng.standard_normal((B, dim))
        unif = rng.random(B) if mala else empty
        kept, acc, status = step_fn(noise, unif, it0, kept)
        accepted += acc
        if status >= 0:
            raise DivergenceError(int(status))
        it0 += B
    return out, accepted / cfg.steps


def _python_block(target, x, grad, vcur, h, noise, unif, mala, it0, burn_in, thin, out, kept):
    sq = math.sqrt(2.0 * h)
    accepted = 0
    for b in range(noise.shape[0]):
        it = it0 + b + 1
        if mala:
            xi = noise[b]
            y = x - h * grad + sq * xi
            vy, gy = target.eval(y)
            if not (math.isfinite(vy) and np.all(np.isfinite(y))):
                return kept, accepted, it
            la = mala_log_accept(vcur[0], vy, x, y, grad, gy, h)
            if la >= 0.0 or math.log(unif[b]) < la:
                accepted += 1
                vcur[0] = vy
                x[:] = y
                grad[:] = gy
        else:
            x[:] = x - h * grad + sq * noise[b]
            if not np.all(np.isfinite(x)):
                return kept, accepted, it
            v, g = target.eval(x)
            vcur[0] = v
            grad[:] = g
        if it > burn_in and (it - burn_in) % thin == 0:
            out[kept] = x
            kept += 1
    return kept, accepted, -1


def mala_log_accept(vx: float, vy: float, x, y, gx, gy, h: float) -> float:
    """log of exp(V(x) - V(y) + q(y, x) - q(x, y)), q the Langevin proposal log-density."""
    fwd = y - x + h * np.asarray(gx)
    bwd = x - y + h * np.asarray(gy)
    return vx - vy - float(bwd @ bwd) / (4 * h) + float(fwd @ fwd) / (4 * h)


class _GradOnly:
    def __init__(self, fn: Callable, dim: int):
        self.fn = fn
        self.dim = dim

    def eval(self, x):
        return 0.0, np.asarray(self.fn(x), dtype=float)


def _warn_step(cfg: ChainConfig, lhat: float | None):
    if lhat is not None and cfg.step > 1.0 / lhat:
        warnings.warn(f"step {cfg.step:.3g} exceeds 1/L-hat = {1.0 / lhat:.3g}", stacklevel=3)


def run_ula(target_grad, cfg: ChainConfig, *, dim: int | None = None, chain: int = 0,
            lhat: float | None = None, backend: str | None = None) -> np.ndarray:
    """Unadjusted Langevin: x <- x - h grad V(x) + sqrt(2h) xi.

    ``target_grad`` is a target with ``eval`` or a bare gradient callable
    (then ``dim`` is required). Returns kept states, shape (n_kept, d).
    """
    _warn_step(cfg, lhat)
    if hasattr(target_grad, "eval"):
        target = target_grad
    else:
        if dim is None:
            raise InputError("dim is required with a bare gradient callable")
        target = _GradOnly(target_grad, dim)
    return _run(target, cfg, chain, False, backend)[0]


def run_mala(target, cfg: ChainConfig, *, chain: int = 0, lhat: float | None = None,
             backend: str | None = None) -> tuple[np.ndarray, float]:
    """Metropolis-adjusted Langevin; returns (kept states, acceptance rate)."""
    _warn_step(cfg, lhat)
    return _run(target, cfg, chain, True, backend)


def run_chains(target, cfg: ChainConfig, n_chains: int, method: str = "mala",
               backend: str | None = None, lhat: float | None = None):
    """Run independent chains in chain-index order; returns (list of states, rates)."""
    if method not in ("mala", "ula"):
        raise InputError(f"unknown method {method!r}")
    _warn_step(cfg, lhat)
    states, rates = [], []
    for c in range(n_chains):
        if method == "mala":
            s, r = _run(target, cfg, c, True, backend)
        else:
            s, r = _run(target, cfg, c, False, backend)[0], 1.0
        states.append(s)
        rates.append(r)
    return states, rates


# ---------------------------------------------------------------------------
# exact sampling by rejection
# ---------------------------------------------------------------------------

def _mixture_logpdf(env: GaussianMixture, X) -> np.ndarray:
    """Normalized log-density of a mixture (components with normalizers)."""
    pk = env.component_mass()
    if env.isotropic:
        log_norm = 0.5 * env.dim * np.log(env.s / (2 * np.pi))
    else:
        log_norm = 0.5 * (np.linalg.slogdet(env.precisions)[1] - env.dim * np.log(2 * np.pi))
    e, _ = env._exponents(np.atleast_2d(X))
    with np.errstate(divide="ignore"):
        e = e - env.log_w[None, :] + np.log(pk)[None, :] + log_norm[None, :]
    emax = e.max(axis=1)
    return emax + np.log(np.exp(e - emax[:, None]).sum(axis=1))


def _probe_points(env: GaussianMixture, rng, n_random: int = 20000) -> np.ndarray:
    from .density import sample_mixture_iid

    pts = [sample_mixture_iid(env, n_random, rng)]
    d = env.dim
    if d <= 3:
        sd = 1.0 / np.sqrt(np.min(env.m_i))
        lo = env.means.min(axis=0) - 8 * sd
        hi = env.means.max(axis=0) + 8 * sd
        n_axis = {1: 20001, 2: 401, 3: 61}[d]
        axes = [np.linspace(lo[j], hi[j], n_axis) for j in range(d)]
        pts.append(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d))
    return np.concatenate(pts)


def envelope_for_mixture(gm: GaussianMixture, inflate: float = 2.0) -> GaussianMixture:
    """Same components with standard deviations scaled by ``inflate``."""
    if gm.isotropic:
        prec = gm.s / inflate ** 2
    else:
        prec = gm.precisions / inflate ** 2
    return GaussianMixture(gm.component_mass(), gm.means, prec)


def rejection_sample_flattened(target, spec: FlattenSpec, envelope: GaussianMixture, n: int,
                               seed, *, safety: float = 2.0, min_rate: float = 1e-4) -> np.ndarray:
    """Exact draws from pi proportional to exp(-T(U)) by rejection from ``envelope``.

    The log-domination constant is the maximum of -T(U) - log q over a probe
    set (envelope draws plus a grid when d <= 3), raised by ``ln(safety)``.
    """
    if n < 1:
        raise InputError("n must be positive")
    rng = np.random.default_rng(seed)
    table = default_table()

    def log_target(X):
        return -t_value_batch(spec, target.u_batch(X), table)

    probe = _probe_points(envelope, rng)
    logK = float(np.max(log_target(probe) - _mixture_logpdf(envelope, probe))) + math.log(safety)
    from .density import sample_mixture_iid

    out, got, proposed = [], 0, 0
    batch = max(1024, 4 * n)
    while got < n:
        X = sample_mixture_iid(envelope, batch, rng)
        lr = log_target(X) - _mixture_logpdf(envelope, X) - logK
        if np.any(lr > 0):
            warnings.warn("envelope domination violated at a sampled point", stacklevel=2)
        acc = np.log(rng.random(batch)) < lr
        proposed += batch
        out.append(X[acc])
        got += int(acc.sum())
        if proposed >= 10 * batch and got / proposed < min_rate:
            break
    rate = got / proposed
    if rate < min_rate:
        raise EnvelopeError(f"acceptance rate {rate:.3g} below {min_rate:g}")
    return np.concatenate(out)[:n]
