"""Smooth flattening map T and the flattened negative log-density T o U.

T is the mollified truncation T = phi * T0 with T0(y) = max(y, M + 1) and
phi the standard mollifier on (-1, 1). Hence T(y) = M + 1 for y <= M,
T(y) = y for y >= M + 2, T' = Phi(y - M - 1) and T'' = phi(y - M - 1) where
Phi is the mollifier CDF.

Writing a = y - M - 1, the convolution reduces to

    T(y) = M + 1 + E(a),   E(a) = int_{-1}^{a} phi(t) (a - t) dt,

which is the form evaluated here; it avoids cancellation against M + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import InputError

_REL = 1e-13


def _bump(t: float) -> float:
    return math.exp(-1.0 / (1.0 - t * t)) if -1.0 < t < 1.0 else 0.0


@lru_cache(maxsize=None)
def mollifier_normalizer() -> float:
    """int_{-1}^{1} exp(-1/(1 - y^2)) dy, computed once."""
    return 2.0 * quad(_bump, 0.0, 1.0, epsabs=0.0, epsrel=_REL, limit=200)[0]


def mollifier(t):
    """Standard mollifier phi(t); zero outside (-1, 1). Accepts arrays."""
    Z = mollifier_normalizer()
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti)) / Z
    return out if out.ndim else float(out)


def mollifier_deriv(t):
    """phi'(t) = -2 t phi(t) / (1 - t^2)^2."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = -2.0 * ti * mollifier(ti) / (1.0 - ti * ti) ** 2
    return out if out.ndim else float(out)


def _phi_scalar(t: float) -> float:
    return _bump(t) / mollifier_normalizer()


def mollifier_cdf(a: float, tol: float = 1e-10) -> float:
    """Phi(a) = int_{-1}^{a} phi by adaptive quadrature.

    The tail closest to a is integrated so that tiny values keep their
    relative accuracy; ``tol`` bounds the absolute error.
    """
    a = float(a)
    if a <= -1.0:
        return 0.0
    if a >= 1.0:
        return 1.0
    if a == 0.0:
        return 0.5
    if a < 0.0:
        return quad(_phi_scalar, -1.0, a, epsabs=0.0, epsrel=_REL, limit=200)[0]
    return 1.0 - quad(_phi_scalar, a, 1.0, epsabs=0.0, epsrel=_REL, limit=200)[0]


def _excess_quad(a: float, tol: float) -> float:
    """E(a) = int_{-1}^{a} phi(t)(a - t) dt, the convolution minus M + 1."""
    if a <= -1.0:
        return 0.0
    if a >= 1.0:
        return a
    f = lambda t: _phi_scalar(t) * (a - t)
    return quad(f, -1.0, a, epsabs=0.0, epsrel=_REL, limit=200)[0]


class MollifierTable:
    """Phi and E on a uniform grid over [-1, 1] with cubic Hermite lookup.

    The Hermite slopes are the exact derivatives (phi for Phi, Phi for E),
    so interpolation error is O(h^4) with h the grid spacing.
    """

    def __init__(self, n: int = 4097):
        if n < 3 or n % 2 == 0:
            raise InputError("table size must be an odd integer >= 3")
        grid = np.linspace(-1.0, 1.0, n)
        phi = mollifier(grid)
        half = n // 2
        cdf = np.zeros(n)
        tphi = np.zeros(n)  # int_{-1}^{a} t phi(t) dt
        for j in range(1, half + 1):
            lo, hi = grid[j - 1], grid[j]
            cdf[j] = cdf[j - 1] + quad(_phi_scalar, lo, hi, epsabs=0.0, epsrel=_REL)[0]
            tphi[j] = tphi[j - 1] + quad(lambda t: t * _phi_scalar(t), lo, hi,
                                         epsabs=0.0, epsrel=_REL)[0]
        cdf[half] = 0.5
        # Phi(-a) = 1 - Phi(a); int_{-1}^{a} t phi is even in a
        cdf[half + 1:] = 1.0 - cdf[half - 1::-1]
        tphi[half + 1:] = tphi[half - 1::-1]
        cdf[-1] = 1.0
        tphi[-1] = 0.0
        self.n = n
        self.grid = grid
        self.step = grid[1] - grid[0]
        self.phi = phi
        self.cdf_values = cdf
        self.excess_values = grid * cdf - tphi
        self.excess_values[0] = 0.0
        self.excess_values[-1] = 1.0

    def _hermite(self, a, f, df):
        a = np.asarray(a, dtype=float)
        x = np.clip(a, -1.0, 1.0)
        u = (x + 1.0) / self.step
        j = np.minimum(np.floor(u).astype(np.int64), self.n - 2)
        t = u - j
        t2 = t * t
        t3 = t2 * t
        h = self.step
        return ((2 * t3 - 3 * t2 + 1) * f[j] + (t3 - 2 * t2 + t) * h * df[j]
                + (-2 * t3 + 3 * t2) * f[j + 1] + (t3 - t2) * h * df[j + 1])

    def cdf(self, a):
        a = np.asarray(a, dtype=float)
        out = np.clip(self._hermite(a, self.cdf_values, self.phi), 0.0, 1.0)
        out = np.where(a <= -1.0, 0.0, np.where(a >= 1.0, 1.0, out))
        return out if out.ndim else float(out)

    def excess(self, a):
        a = np.asarray(a, dtype=float)
        out = self._hermite(a, self.excess_values, self.cdf_values)
        out = np.where(a <= -1.0, 0.0, np.where(a >= 1.0, a, out))
        return out if out.ndim else float(out)


@lru_cache(maxsize=4)
def default_table(n: int = 4097) -> MollifierTable:
    return MollifierTable(n)


@dataclass(frozen=True)
class FlattenSpec:
    """Threshold M and quadrature tolerance of the flattening map (c = 1)."""

    M: float
    c: float = 1.0
    quad_tol: float = 1e-10

    def __post_init__(self):
        if self.c != 1.0:
            raise InputError("only c = 1 is implemented for the flattening map")
        if not math.isfinite(self.M):
            raise InputError("M must be finite")
        if self.quad_tol <= 0:
            raise InputError("quad_tol must be positive")

    def shifted(self, delta: float) -> "FlattenSpec":
        return FlattenSpec(self.M + delta, self.c, self.quad_tol)


def t_value(spec: FlattenSpec, y: float) -> float:
    """T(y): exact outside (M, M + 2), quadrature of the convolution inside."""
    y = float(y)
    if y <= spec.M:
        return spec.M + 1.0
    if y >= spec.M + 2.0:
        return y
    return spec.M + 1.0 + _excess_quad(y - spec.M - 1.0, spec.quad_tol)


def t_excess(spec: FlattenSpec, y: float) -> float:
    """T(y) - (M + 1), without the cancellation in t_value's sum."""
    y = float(y)
    if y <= spec.M:
        return 0.0
    if y >= spec.M + 2.0:
        return y - spec.M - 1.0
    return _excess_quad(y - spec.M - 1.0, spec.quad_tol)


def t_derivs(spec: FlattenSpec, y: float) -> tuple[float, float]:
    """(T'(y), T''(y)) = (Phi(y - M - 1), phi(y - M - 1))."""
    y = float(y)
    if y <= spec.M:
        return 0.0, 0.0
    if y >= spec.M + 2.0:
        return 1.0, 0.0
    a = y - spec.M - 1.0
    return mollifier_cdf(a, spec.quad_tol), _phi_scalar(a)


def t_value_batch(spec: FlattenSpec, y, table: MollifierTable | None = None) -> np.ndarray:
    """Vectorized T via the Hermite table (absolute error ~1e-12)."""
    table = table or default_table()
    y = np.asarray(y, dtype=float)
    return spec.M + 1.0 + table.excess(y - spec.M - 1.0)


def log_weight_batch(spec: FlattenSpec, u, table: MollifierTable | None = None) -> np.ndarray:
    """T(U) - U for an array of U values, formed as E(a) - a."""
    table = table or default_table()
    a = np.asarray(u, dtype=float) - spec.M - 1.0
    lw = table.excess(a) - a
    return np.where(a >= 1.0, 0.0, lw)


def flattened_eval(target, spec: FlattenSpec, x) -> tuple[float, np.ndarray]:
    """(T(U(x)), grad(T o U)(x)) with the three-branch gradient.

    Zero gradient on U <= M, T'(U) grad U inside the band, grad U beyond.
    """
    u, g = target.eval(x)
    if u <= spec.M:
        return spec.M + 1.0, np.zeros_like(g)
    if u >= spec.M + 2.0:
        return u, g
    dT, _ = t_derivs(spec, u)
    return t_value(spec, u), dT * g


class FlattenedTarget:
    """The proposal negative log-density T o U as a target.

    ``exact=True`` routes through the quadrature path; otherwise the
    Hermite table is used, which is what the samplers want.
    """

    def __init__(self, base, spec: FlattenSpec, exact: bool = False,
                 table: MollifierTable | None = None):
        self.base = base
        self.spec = spec
        self.dim = base.dim
        self.exact = exact
        self.table = table or default_table()

    def eval(self, x):
        if self.exact:
            return flattened_eval(self.base, self.spec, x)
        u, g = self.base.eval(x)
        M = self.spec.M
        if u <= M:
            return M + 1.0, np.zeros_like(g)
        if u >= M + 2.0:
            return u, g
        a = u - M - 1.0
        return M + 1.0 + self.table.excess(a), self.table.cdf(a) * g

    def u(self, x):
        return self.eval(x)[0]

    def grad_u(self, x):
        return self.eval(x)[1]

    def u_batch(self, X):
        U = self.base.u_batch(X)
        return t_value_batch(self.spec, U, self.table)


def choose_M(profile, u0: float, rule: str, *, c_hat_bias: float = 0.0,
             n_classes: int | None = None) -> float:
    """Threshold M from one of three rules.

    ``set``: u0 + L R^2 / 2. ``a1``: u0 + c_U + 2 L R^2.
    ``bnn``: c_hat_bias + ln I + c_U + L R^2 (needs ``n_classes``).
    Here R is the profile radius.
    """
    if rule == "set":
        return u0 + profile.L * profile.R ** 2 / 2.0
    if rule == "a1":
        return u0 + profile.c_U + 2.0 * profile.L * profile.R ** 2
    if rule == "bnn":
        if n_classes is None:
            raise InputError("rule 'bnn' needs the number of classes")
        return c_hat_bias + math.log(n_classes) + profile.c_U + profile.L * profile.R ** 2
    raise InputError(f"unknown M rule {rule!r}")
