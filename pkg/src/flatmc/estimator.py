"""Self-normalized importance sampling with tail-matching weights.

Weights are w = exp(T(U) - U) >= 1 and are handled in log space with a
single max-subtraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import BoxTooSmallError, InputError, NumericalError, UnsupportedError
from .flatten import FlattenSpec, default_table, log_weight_batch, t_value_batch


@dataclass(frozen=True)
class WeightedSample:
    point: np.ndarray
    log_weight: float


@dataclass(frozen=True)
class SnisResult:
    estimate: float
    ess: float
    n: int
    max_log_weight: float
    weight_cv: float
    se: float = math.nan


def log_weights(samples, target, spec: FlattenSpec) -> np.ndarray:
    """T(U(x)) - U(x) for each row of ``samples``."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    return log_weight_batch(spec, target.u_batch(X))


def weighted_samples(samples, target, spec: FlattenSpec) -> list[WeightedSample]:
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    return [WeightedSample(x, float(lw)) for x, lw in zip(X, log_weights(X, target, spec))]


def ess(log_w) -> float:
    """(sum w)^2 / sum w^2 from log-weights."""
    lw = np.asarray(log_w, dtype=float).ravel()
    if lw.size == 0:
        raise InputError("need at least one weight")
    return float(np.exp(2 * logsumexp(lw) - logsumexp(2 * lw)))


def _normalized(lw: np.ndarray) -> np.ndarray:
    w = np.exp(lw - lw.max())
    tot = w.sum()
    if not tot > 0:
        raise NumericalError("all importance weights vanished")
    return w / tot


def snis_from_log_weights(values, log_w, *, se: float = math.nan) -> SnisResult:
    f = np.asarray(values, dtype=float).ravel()
    lw = np.asarray(log_w, dtype=float).ravel()
    if f.size == 0 or f.shape != lw.shape:
        raise InputError("values and log-weights must be nonempty and aligned")
    wn = _normalized(lw)
    est = float(wn @ f)
    lo, hi = f.min(), f.max()
    est = min(max(est, lo), hi)  # guard rounding outside the convex hull
    w = wn * f.size
    return SnisResult(est, ess(lw), f.size, float(lw.max()), float(np.std(w)), se)


def snis(samples, target, spec: FlattenSpec, phi: Callable, *, bootstrap: int = 0,
         seed=None) -> SnisResult:
    """sum phi(x_i) w_i / sum w_i with w_i = exp(T(U(x_i)) - U(x_i)).

    ``phi`` maps an (n, d) array to n values. With ``bootstrap > 0`` the
    standard error is the spread over that many resamples.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] == 0:
        raise InputError("no samples")
    lw = log_weights(X, target, spec)
    f = np.asarray(phi(X), dtype=float).ravel()
    se = bootstrap_se(f, lw, bootstrap, seed) if bootstrap else math.nan
    return snis_from_log_weights(f, lw, se=se)


def bootstrap_se(values, log_w, n_boot: int = 200, seed=None) -> float:
    """Standard deviation of the SNIS ratio over i.i.d. resamples."""
    f = np.asarray(values, dtype=float)
    lw = np.asarray(log_w, dtype=float)
    rng = np.random.default_rng(seed)
    n = f.size
    w = np.exp(lw - lw.max())
    est = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        est[b] = (w[idx] @ f[idx]) / w[idx].sum()
    return float(est.std(ddof=1))


def batch_means_se(values, log_w, n_batches: int = 20) -> float:
    """Standard error of the SNIS ratio for correlated (chain-ordered) samples.

    Linearizes the ratio, r_i = w_i (f_i - est) / mean(w), and applies batch
    means to r over contiguous blocks.
    """
    f = np.asarray(values, dtype=float)
    lw = np.asarray(log_w, dtype=float)
    n = f.size
    if n < 2 * n_batches:
        n_batches = max(2, n // 2)
    w = np.exp(lw - lw.max())
    est = (w @ f) / w.sum()
    r = w * (f - est) / w.mean()
    b = n // n_batches
    means = r[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def empirical_rho(samples, target, spec: FlattenSpec) -> float:
    """mean(w^2) / mean(w)^2 from samples of the proposal."""
    lw = log_weights(samples, target, spec)
    n = lw.size
    return float(np.exp(math.log(n) + logsumexp(2 * lw) - 2 * logsumexp(lw)))


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def quadrature_rho(target, spec: FlattenSpec, box, grid, *, boundary_tol: float = 1e-12) -> float:
    """rho = (int e^{T(U) - 2U})(int e^{-T(U)}) / (int e^{-U})^2 on a tensor grid.

    ``box`` is a sequence of (lo, hi) per coordinate and ``grid`` the number
    of points per coordinate (int or sequence).
    """
    d = target.dim
    if d > 2:
        raise UnsupportedError("grid quadrature is limited to d <= 2")
    box = np.asarray(box, dtype=float).reshape(d, 2)
    counts = np.broadcast_to(np.asarray(grid, dtype=int), (d,))
    axes = [np.linspace(box[j, 0], box[j, 1], counts[j]) for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack(mesh, axis=-1).reshape(-1, d)
    U = target.u_batch(X).reshape(mesh[0].shape)
    TU = t_value_batch(spec, U, default_table())
    logw = np.zeros(mesh[0].shape)
    for j in range(d):
        wj = np.log(_trapezoid_weights(counts[j], axes[j][1] - axes[j][0]))
        shape = [1] * d
        shape[j] = counts[j]
        logw = logw + wj.reshape(shape)

    edge = np.zeros(mesh[0].shape, dtype=bool)
    for j in range(d):
        idx = [slice(None)] * d
        idx[j] = 0
        edge[tuple(idx)] = True
        idx[j] = -1
        edge[tuple(idx)] = True
    for integrand in (-U, -TU, TU - 2 * U):
        if np.max(integrand[edge]) - np.max(integrand) > math.log(boundary_tol):
            raise BoxTooSmallError("integrand on the box boundary exceeds the tolerance")

    l1 = logsumexp(TU - 2 * U + logw)
    l2 = logsumexp(-TU + logw)
    l3 = logsumexp(-U + logw)
    return float(np.exp(l1 + l2 - 2 * l3))


# ---------------------------------------------------------------------------
# built-in test functions
# ---------------------------------------------------------------------------

def coordinate_mean(j: int) -> Callable:
    return lambda X: np.atleast_2d(X)[:, j]


def gaussian_bump(center, width: float) -> Callable:
    """exp(-|x - center|^2 / (2 width^2)), values in (0, 1]."""
    c = np.asarray(center, dtype=float)
    w2 = 2.0 * float(width) ** 2
    return lambda X: np.exp(-np.sum((np.atleast_2d(X) - c) ** 2, axis=1) / w2)


def affine(coef, offset: float = 0.0) -> Callable:
    a = np.asarray(coef, dtype=float)
    return lambda X: np.atleast_2d(X) @ a + offset


def test_function_from_config(cfg: dict, dim: int) -> Callable:
    kind = cfg.get("kind")
    if kind == "mean":
        return coordinate_mean(int(cfg.get("coord", 0)))
    if kind == "bump":
        return gaussian_bump(cfg.get("center", [0.0] * dim), float(cfg.get("width", 1.0)))
    if kind == "affine":
        return affine(cfg["coef"], float(cfg.get("offset", 0.0)))
    raise InputError(f"unknown test function kind {kind!r}")
