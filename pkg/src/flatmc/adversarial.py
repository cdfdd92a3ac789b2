"""Counterexample densities for the intractability results and their checks.

``SewnBimodal`` (f3) sews a wide Gaussian f1 and a narrow off-centre
Gaussian f2 along a sphere; ``AngularTwoScale`` (f4) switches curvature
between m1 and L1 by the angle to a hidden direction z.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .density import Target, _point
from .errors import HypothesisError, InputError, PrecisionError
from .flatten import default_table, mollifier, mollifier_cdf, mollifier_deriv

SQ2, SQ3 = math.sqrt(2.0), math.sqrt(3.0)
CAP_COS = (SQ3 + SQ2) / 4          # H = 0 at and below
FULL_COS = SQ3 / 2                  # H = 1 at and above
H_SHIFT = (3 * SQ3 + SQ2) / 8
H_SCALE = (SQ3 - SQ2) / 8


def c0_constant() -> float:
    return (((16.0 / 9.0) * math.sin(3 * math.pi / 16)) ** 2 - 1.0 / 6.0) ** -0.5


def _unit(direction, d: int) -> np.ndarray:
    z = np.asarray(direction, dtype=float).ravel()
    if z.shape != (d,):
        raise InputError(f"direction has shape {z.shape}, expected ({d},)")
    nz = np.linalg.norm(z)
    if not nz > 0:
        raise InputError("direction must be nonzero")
    return z / nz


def _cdf_batch(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.where(a >= 1.0, 1.0, 0.0)
    inside = (a > -1.0) & (a < 1.0)
    out[inside] = default_table().cdf(a[inside])
    return out


# ---------------------------------------------------------------------------
# f3: strongly convex outside a ball
# ---------------------------------------------------------------------------

class SewnBimodal(Target):
    """f3 = g f1 + (1 - g) f2 with g a radial mollified step around gamma x0."""

    def __init__(self, m0: float, L0: float, direction, d: int):
        d = int(d)
        if d <= 1:
            raise HypothesisError("f3 needs d > 1")
        m0, L0 = float(m0), float(L0)
        if not (m0 > 0 and 6.0 * math.exp(24.0 / d) * m0 < L0):
            raise HypothesisError("f3 needs 6 e^{24/d} m0 < L0")
        self.dim = d
        self.m0, self.L0 = m0, L0
        self.kappa0 = L0 / m0
        self.c0 = c0_constant()
        self.z = _unit(direction, d)
        self.x0_norm = self.c0 * math.sqrt(d * math.log(self.kappa0) / L0)
        self.x0 = self.x0_norm * self.z
        ik = 1.0 / self.kappa0
        self.gamma = 1.0 / (1.0 - ik)
        self.r_d = self.x0_norm * math.sqrt(ik / (1 - ik) ** 2 + self.c0 ** -2 / (1 - ik))
        self.r0 = self.r_d / 8
        self.center = self.gamma * self.x0
        self.inner = self.r_d - self.r0
        self.outer = self.r_d + self.r0
        self._c1 = 0.5 * d * math.log(2 * math.pi / m0)
        self._c2 = 0.5 * d * math.log(2 * math.pi / L0)
        if not 1.0 < self.gamma < 1.2:
            raise HypothesisError(f"gamma = {self.gamma} outside (1, 6/5)")
        ratio = self.r_d / self.x0_norm
        hi = self.gamma * math.sqrt(1.0 / 6.0 + self.c0 ** -2)
        if not (1.0 / self.c0 - 1e-12 <= ratio <= hi + 1e-12):
            raise HypothesisError(f"r_d/|x0| = {ratio} outside [{1 / self.c0}, {hi}]")

    def covering_radius(self) -> float:
        return float(np.linalg.norm(self.center)) + 2 * self.outer

    def f1(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.m0 * np.sum(x * x, axis=-1) + self._c1

    def f2(self, x):
        D = np.asarray(x, dtype=float) - self.x0
        return 0.5 * self.L0 * np.sum(D * D, axis=-1) + self._c2

    def g(self, x) -> float:
        r = float(np.linalg.norm(np.asarray(x, dtype=float) - self.center))
        if r >= self.outer:
            return 1.0
        if r <= self.inner:
            return 0.0
        return mollifier_cdf((r - self.inner) / self.r0 - 1.0)

    def eval(self, x):
        x = _point(x, self.dim)
        D = x - self.center
        r = float(np.linalg.norm(D))
        if r >= self.outer:
            return float(self.f1(x)), self.m0 * x
        if r <= self.inner:
            return float(self.f2(x)), self.L0 * (x - self.x0)
        s = (r - self.inner) / self.r0 - 1.0
        gv = float(default_table().cdf(s))
        f1, f2 = float(self.f1(x)), float(self.f2(x))
        grad_g = (mollifier(s) / self.r0) * D / r
        grad = grad_g * (f1 - f2) + gv * self.m0 * x + (1.0 - gv) * self.L0 * (x - self.x0)
        return gv * f1 + (1.0 - gv) * f2, grad

    def u_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r = np.linalg.norm(X - self.center, axis=1)
        gv = _cdf_batch((r - self.inner) / self.r0 - 1.0)
        gv = np.where(r >= self.outer, 1.0, np.where(r <= self.inner, 0.0, gv))
        f1, f2 = self.f1(X), self.f2(X)
        out = gv * f1 + (1.0 - gv) * f2
        out[r >= self.outer] = f1[r >= self.outer]
        out[r <= self.inner] = f2[r <= self.inner]
        return out


def build_f3(m0: float, L0: float, direction, d: int) -> SewnBimodal:
    return SewnBimodal(m0, L0, direction, d)


def _delta_ratio(a, sa, b, sb):
    """a/b and its delta-method standard error for independent a and b."""
    r = a / b
    return r, abs(r) * math.sqrt((sa / a) ** 2 + (sb / b) ** 2) if a > 0 else math.inf


def _check_precision(ratio: float, se: float):
    if not ratio > 0 or se / ratio > 0.1:
        raise PrecisionError(f"relative SE {se / ratio if ratio > 0 else math.inf:.3g} > 0.1; increase n_mc")


def _chunks(n: int, size: int = 200_000):
    done = 0
    while done < n:
        b = min(size, n - done)
        yield b
        done += b


def f3_mass_ratio(f3: SewnBimodal, n_mc: int, seed) -> tuple[float, float]:
    """Share of the f3 mass inside B_{r_d - r0}(gamma x0), with its SE.

    Inside that ball f3 = f2, a normalized Gaussian density, so the numerator
    is a ball probability under N(x0, I/L0). The total mass uses the proposal
    (N(0, I/m0) + N(x0, I/L0)) / 2, for which the weights are at most 2.
    """
    if n_mc < 2:
        raise InputError("n_mc must be at least 2")
    rng = np.random.default_rng(seed)
    d = f3.dim
    hits = 0
    s1 = s2 = 0.0
    for b in _chunks(n_mc):
        Y = f3.x0 + rng.standard_normal((b, d)) / math.sqrt(f3.L0)
        hits += int(np.sum(np.linalg.norm(Y - f3.center, axis=1) < f3.inner))
    for b in _chunks(n_mc):
        pick = rng.random(b) < 0.5
        X = rng.standard_normal((b, d))
        X[pick] /= math.sqrt(f3.m0)
        X[~pick] = f3.x0 + X[~pick] / math.sqrt(f3.L0)
        f1, f2 = f3.f1(X), f3.f2(X)
        lq = np.logaddexp(-f1, -f2) - math.log(2.0)
        w = np.exp(-f3.u_batch(X) - lq)
        s1 += float(w.sum())
        s2 += float((w * w).sum())
    p = hits / n_mc
    sp = math.sqrt(max(p * (1 - p), 1e-300) / n_mc)
    mean = s1 / n_mc
    sd = math.sqrt(max(s2 / n_mc - mean * mean, 0.0) / n_mc)
    ratio, se = _delta_ratio(p, sp, mean, sd)
    _check_precision(ratio, se)
    return ratio, se


# ---------------------------------------------------------------------------
# f4: dissipative, curvature chosen by angle
# ---------------------------------------------------------------------------

def smoothed_heaviside(t):
    """H(t) = Phi((t - shift)/scale), 0 below (sqrt3 + sqrt2)/4, 1 above sqrt3/2."""
    return _cdf_batch((np.asarray(t, dtype=float) - H_SHIFT) / H_SCALE)


def smoothed_heaviside_deriv(t):
    return mollifier((np.asarray(t, dtype=float) - H_SHIFT) / H_SCALE) / H_SCALE


def smoothed_heaviside_deriv2(t):
    return mollifier_deriv((np.asarray(t, dtype=float) - H_SHIFT) / H_SCALE) / H_SCALE ** 2


class AngularTwoScale(Target):
    """f4(x) = (m1 H(c) + L1 (1 - H(c))) |x|^2 / 2 with c = z.x/|x|; f4(0) = 0."""

    def __init__(self, m1: float, L1: float, direction, d: int):
        d = int(d)
        if d <= 2:
            raise HypothesisError("f4 needs d > 2")
        m1, L1 = float(m1), float(L1)
        if not (m1 > 0 and 16.0 * m1 <= L1):
            raise HypothesisError("f4 needs 16 m1 <= L1")
        self.dim = d
        self.m1, self.L1 = m1, L1
        self.kappa1 = L1 / m1
        self.z = _unit(direction, d)

    def eval(self, x):
        x = _point(x, self.dim)
        nx = float(np.linalg.norm(x))
        if nx < 1e-12:
            return 0.0, np.zeros(self.dim)
        zx = float(self.z @ x)
        c = zx / nx
        H = float(smoothed_heaviside(c))
        k = self.m1 * H + self.L1 * (1.0 - H)
        val = 0.5 * k * nx * nx
        dH = float(smoothed_heaviside_deriv(c))
        if dH == 0.0:
            return val, k * x
        ybar = nx * self.z - (zx / nx) * x
        return val, 0.5 * (self.m1 - self.L1) * dH * ybar + k * x

    def u_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n2 = np.sum(X * X, axis=1)
        nx = np.sqrt(n2)
        small = nx < 1e-12
        c = np.where(small, 0.0, X @ self.z / np.where(small, 1.0, nx))
        H = smoothed_heaviside(c)
        out = 0.5 * (self.m1 * H + self.L1 * (1.0 - H)) * n2
        out[small] = 0.0
        return out


def build_f4(m1: float, L1: float, direction, d: int) -> AngularTwoScale:
    return AngularTwoScale(m1, L1, direction, d)


def f4_cap_mass(f4: AngularTwoScale, n_mc: int, seed) -> tuple[float, float]:
    """Share of the f4 mass in the cap z.x/|x| >= (sqrt3 + sqrt2)/4, with its SE.

    Cap mass uses N(0, I/m1) draws with weight e^{-f4 + m1|x|^2/2} <= 1; off
    the cap f4 = L1|x|^2/2 exactly, so the complement is a Gaussian
    probability estimated from N(0, I/L1) draws. Both masses are in units of
    (2 pi/m1)^{d/2}.
    """
    if n_mc < 2:
        raise InputError("n_mc must be at least 2")
    rng = np.random.default_rng(seed)
    d = f4.dim
    s1 = s2 = 0.0
    outside = 0
    for b in _chunks(n_mc):
        X = rng.standard_normal((b, d)) / math.sqrt(f4.m1)
        n2 = np.sum(X * X, axis=1)
        cap = X @ f4.z >= CAP_COS * np.sqrt(n2)
        w = np.zeros(b)
        w[cap] = np.exp(-f4.u_batch(X[cap]) + 0.5 * f4.m1 * n2[cap])
        s1 += float(w.sum())
        s2 += float((w * w).sum())
    for b in _chunks(n_mc):
        X = rng.standard_normal((b, d))
        outside += int(np.sum(X @ f4.z < CAP_COS * np.linalg.norm(X, axis=1)))
    a = s1 / n_mc
    sa = math.sqrt(max(s2 / n_mc - a * a, 0.0) / n_mc)
    q = outside / n_mc
    scale = f4.kappa1 ** (-0.5 * d)
    b_ = scale * q
    sb = scale * math.sqrt(max(q * (1 - q), 1e-300) / n_mc)
    tot = a + b_
    if not tot > 0:
        raise PrecisionError("no mass observed; increase n_mc")
    ratio = a / tot
    se = math.sqrt((b_ * sa) ** 2 + (a * sb) ** 2) / tot ** 2
    _check_precision(ratio, se)
    return ratio, se


# ---------------------------------------------------------------------------
# smoothness probes
# ---------------------------------------------------------------------------

def _hvp(target, x, v, eps):
    return (target.grad_u(x + eps * v) - target.grad_u(x - eps * v)) / (2 * eps)


def hessian_norm_at(target, x, rng, iters: int = 40, rel_step: float = 1e-5) -> float:
    """Operator norm of the Hessian at x by power iteration on FD Hessian-vector products."""
    x = np.asarray(x, dtype=float)
    eps = rel_step * max(1.0, float(np.linalg.norm(x)))
    v = rng.standard_normal(x.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = _hvp(target, x, v, eps)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        if abs(nw - lam) <= 1e-10 * nw:
            lam = nw
            break
        lam = nw
        v = w / nw
    return lam


def probe_smoothness(target, region_sampler: Callable, n_points: int, mode: str, seed) -> float:
    """Largest probed Hessian norm or gradient-Lipschitz ratio.

    ``region_sampler(rng, n)`` returns an (n, d) array. In ``grad_lipschitz``
    mode each sampled x is paired with x + r u, u a random unit vector and r
    log-uniform in [1e-4, 1] times max(1, |x|).
    """
    rng = np.random.default_rng(seed)
    X = np.atleast_2d(region_sampler(rng, n_points))
    if mode == "hessian_norm":
        return max(hessian_norm_at(target, x, rng) for x in X)
    if mode == "grad_lipschitz":
        d = X.shape[1]
        U = rng.standard_normal((X.shape[0], d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        r = 10.0 ** rng.uniform(-4.0, 0.0, X.shape[0]) * np.maximum(1.0, np.linalg.norm(X, axis=1))
        best = 0.0
        for x, u, ri in zip(X, U, r):
            y = x + ri * u
            best = max(best, float(np.linalg.norm(target.grad_u(x) - target.grad_u(y))) / ri)
        return best
    raise InputError(f"unknown mode {mode!r}")


def _random_directions(rng, n, d):
    U = rng.standard_normal((n, d))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def annulus_sampler(f3: SewnBimodal, frac: float = 0.8) -> Callable:
    """80% of points in the sewing annulus, the rest uniform in a covering ball."""
    def sample(rng, n):
        k = int(round(frac * n))
        d = f3.dim
        r = rng.uniform(f3.inner, f3.outer, k)
        A = f3.center + r[:, None] * _random_directions(rng, k, d)
        big = f3.covering_radius()
        rb = big * rng.random(n - k) ** (1.0 / d)
        B = rb[:, None] * _random_directions(rng, n - k, d)
        return np.concatenate([A, B])
    return sample


def cone_sampler(f4: AngularTwoScale, frac: float = 0.8) -> Callable:
    """80% of points in the transition cone (H strictly between 0 and 1), radii in [0.5, 2]."""
    def sample(rng, n):
        d = f4.dim
        k = int(round(frac * n))
        c = rng.uniform(CAP_COS, FULL_COS, k)
        P = _random_directions(rng, k, d)
        P -= np.outer(P @ f4.z, f4.z)
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        dirs = c[:, None] * f4.z + np.sqrt(1 - c * c)[:, None] * P
        A = rng.uniform(0.5, 2.0, k)[:, None] * dirs
        B = rng.uniform(0.5, 2.0, n - k)[:, None] * _random_directions(rng, n - k, d)
        return np.concatenate([A, B])
    return sample


# ---------------------------------------------------------------------------
# packing and thresholds
# ---------------------------------------------------------------------------

COMP_ANGLE = 3 * math.pi / 8
COMP2_ANGLE = 2 * math.acos(CAP_COS)


def log_packing_lower_bound(d: int, angle: float) -> float:
    if d < 3:
        raise InputError("packing bound needs d >= 3")
    if not 0.0 < angle < math.pi / 2:
        raise InputError("angle must lie in (0, pi/2)")
    return (math.log(d) + 0.5 * math.log(2 * math.pi) - math.log(d - 1) - 0.5 * math.log(d + 2)
            - math.log(3 * math.pi / 8) + (2 - d) * math.log(math.sin(angle)))


def packing_lower_bound(d: int, angle: float = COMP_ANGLE) -> float:
    """d sqrt(2 pi) / ((d - 1) sqrt(d + 2)) / (3 pi/8) * sin(angle)^{2 - d}."""
    lg = log_packing_lower_bound(d, angle)
    return math.exp(lg) if lg < 709.0 else math.inf


def threshold_rhs(d: int, theta_norm: float, which: str) -> float:
    if theta_norm < 1:
        raise InputError("theta_norm must be >= 1")
    if which == "comp":
        lg = -d * math.log(math.sin(COMP_ANGLE)) - math.log(5 * math.sqrt(d + 2) * theta_norm)
    elif which == "comp2":
        lg = -d * math.log(math.sin(COMP2_ANGLE)) - math.log(3 * math.sqrt(d + 2) * theta_norm)
    else:
        raise InputError(f"unknown threshold {which!r}")
    return (math.exp(lg) if lg < 709.0 else math.inf) - 1.0


def intractability_threshold(d: int, theta_norm: float = 1.0, which: str = "comp") -> float:
    """Largest integer N with N < RHS, or 0 when there is none."""
    rhs = threshold_rhs(d, theta_norm, which)
    if math.isinf(rhs):
        return math.inf
    if rhs <= 0:
        return 0
    return max(0, math.ceil(rhs) - 1)


# ---------------------------------------------------------------------------
# mode hitting
# ---------------------------------------------------------------------------

def origin_clearance(f3: SewnBimodal) -> float:
    """|gamma x0| - (r_d + r0); negative means the origin is inside the outer ball."""
    return float(np.linalg.norm(f3.center)) - f3.outer


def mode_hit_experiment(sampler: dict, d: int, trials: int, seed, *, m0: float = 1.0,
                        kappa0: float | None = None) -> tuple[float, float]:
    """Fraction of hidden-direction trials in which some iterate enters B_{r_d + r0}(gamma x0).

    ``sampler`` has ``kind`` in {ula, mala, static, oracle} plus ``step`` and
    ``steps`` for the Langevin kinds. Chains start at the origin, which counts
    as iterate 0. Returns (rate, binomial SE).
    """
    from .samplers import ChainConfig, chain_rng, run_mala, run_ula

    if d < 8:
        raise InputError("mode-hit experiment needs d >= 8")
    if trials < 1:
        raise InputError("trials must be positive")
    kind = sampler.get("kind", "ula")
    if kappa0 is None:
        kappa0 = 20.0 * math.exp(24.0 / d)
    hits = 0
    for t in range(trials):
        rng = chain_rng(seed, t)
        f3 = build_f3(m0, kappa0 * m0, rng.standard_normal(d), d)
        if kind == "static":
            path = np.zeros((1, d))
        elif kind == "oracle":
            path = np.vstack([np.zeros(d), f3.center])
        elif kind in ("ula", "mala"):
            cfg = ChainConfig(step=float(sampler.get("step", 1e-3)), steps=int(sampler.get("steps", 10_000)),
                              seed=int(rng.integers(1 << 62)))
            states = run_ula(f3, cfg) if kind == "ula" else run_mala(f3, cfg)[0]
            path = np.vstack([np.zeros(d), states])
        else:
            raise InputError(f"unknown sampler kind {kind!r}")
        if np.any(np.linalg.norm(path - f3.center, axis=1) < f3.outer):
            hits += 1
    p = hits / trials
    return p, math.sqrt(p * (1 - p) / trials)
