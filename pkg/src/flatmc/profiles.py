"""Two-sided growth profiles and the tractability conditions built on them.

A profile holds constants (c_U, R, L, m) with

    (m/2)(|x| - R)^2 1{|x| > R}  <=  U(x) - min U  <=  c_U + (L/2)|x - x*|^2

for some x* in the closed ball of radius R. The helpers below derive such
constants from dissipativity, from convexity outside a ball, and for the
Gaussian-mixture and network families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import BnnPosterior, GaussianMixture
from .errors import HypothesisError, InputError, UnsupportedError


@dataclass(frozen=True)
class A1Profile:
    c_U: float
    R: float
    L: float
    m: float
    grad0: float = 0.0
    provenance: str = ""
    lbar: float | None = None  # Hessian bound outside the ball, when known
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = (self.c_U, self.R, self.L, self.m, self.grad0)
        if not all(math.isfinite(v) for v in vals):
            raise InputError("profile constants must be finite")
        if self.m <= 0 or self.L < self.m:
            raise InputError(f"profile needs L >= m > 0 (got L={self.L}, m={self.m})")
        if self.c_U < 0 or self.R < 0 or self.grad0 < 0:
            raise InputError("profile needs c_U, R, |grad U(0)| >= 0")

    def as_row(self) -> dict:
        return {"c_U": self.c_U, "R": self.R, "L": self.L, "m": self.m,
                "grad0": self.grad0, "provenance": self.provenance}


@dataclass(frozen=True)
class DissipativityParams:
    """grad U(x) . x >= alpha |x|^2 - beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta >= 0:
            raise InputError("dissipativity needs alpha > 0 and beta >= 0")


def a1_from_dissipativity(p: DissipativityParams, lipschitz: float,
                          grad0: float = 0.0) -> A1Profile:
    if lipschitz < p.alpha:
        raise InputError(f"gradient Lipschitz constant {lipschitz} is below alpha {p.alpha}")
    return A1Profile(c_U=0.0, R=math.sqrt(p.beta / p.alpha), L=float(lipschitz),
                     m=float(p.alpha), grad0=grad0, provenance="dissipativity")


def a1_from_convex_outside_ball(R: float, mbar: float, Lbar: float, grad0: float) -> A1Profile:
    """Profile for U strongly convex (mbar) with Hessian <= Lbar outside B_R."""
    if not (Lbar >= mbar > 0) or R < 0 or grad0 < 0:
        raise InputError("need Lbar >= mbar > 0, R >= 0 and grad0 >= 0")
    return A1Profile(c_U=0.0, R=R * (1.0 + Lbar / mbar) + grad0 / mbar, L=float(Lbar),
                     m=mbar / 2.0, grad0=grad0, provenance="convex-outside-ball",
                     lbar=float(Lbar))


# ---------------------------------------------------------------------------
# tractability
# ---------------------------------------------------------------------------

def cocoa_lhs(profile: A1Profile) -> float:
    """(L/m)(sqrt(L) R + ((L/m)(4 c_U + 5 L R^2))^(1/2))^2."""
    k = profile.L / profile.m
    inner = math.sqrt(profile.L) * profile.R + math.sqrt(
        k * (4.0 * profile.c_U + 5.0 * profile.L * profile.R ** 2))
    return k * inner * inner


def check_tractability(profile: A1Profile, d: int, c_hat: float = 1.0) -> tuple[bool, float]:
    """Whether cocoa_lhs <= (d - 1)/(e c_hat^2); returns (ok, RHS - LHS)."""
    if c_hat < 1.0:
        raise InputError("c_hat must be at least 1")
    if d < 1:
        raise InputError("dimension must be positive")
    rhs = (d - 1) / (math.e * c_hat ** 2)
    margin = rhs - cocoa_lhs(profile)
    return margin >= 0.0, margin


def radius_shortcut_holds(profile: A1Profile, d: int) -> bool:
    """Sufficient form sqrt(L) R (1 + L/m) <= sqrt(d - 1)/5, valid for c_U = 0."""
    if profile.c_U != 0.0:
        raise InputError("the radius shortcut applies only when c_U = 0")
    lhs = math.sqrt(profile.L) * profile.R * (1.0 + profile.L / profile.m)
    return lhs <= math.sqrt(max(d - 1, 0)) / 5.0


def flattened_smoothness(profile: A1Profile, lbar: float | None = None) -> float:
    """Hessian bound L-hat for T o U when M = U(0) + c_U + 2 L R^2.

    ``lbar`` is the Hessian bound of U outside B_R; defaults to
    ``profile.lbar`` and then to ``profile.L``.
    """
    Lb = lbar if lbar is not None else (profile.lbar if profile.lbar is not None else profile.L)
    p = profile
    inner = p.grad0 + Lb * p.R + 2.0 * Lb * math.sqrt((1.0 + p.c_U + 5.0 * p.L * p.R ** 2) / p.m)
    return Lb + 2.0 * inner * inner


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------

def mixture_dissipativity(gm: GaussianMixture) -> DissipativityParams:
    alpha = float(np.min(gm.m_i)) / 2.0
    beta = float(np.max(gm.L_i * gm.R ** 2 * (gm.L_i / gm.m_i))) / 2.0
    return DissipativityParams(alpha, beta)


def _unique_min_index(gm: GaussianMixture) -> int | None:
    if not gm.isotropic:
        return None
    s = gm.s
    k = int(np.argmin(s))
    if np.sum(s == s[k]) > 1:
        return None
    return k


def mixture_gradient_lipschitz(gm: GaussianMixture) -> float:
    """Stand-in Lipschitz constant for grad U used by the dissipativity route."""
    if _unique_min_index(gm) is not None and gm.n_components > 1:
        return 1.5 * float(gm.s[_unique_min_index(gm)])
    Lmax = float(np.max(gm.L_i))
    return Lmax * (1.0 + Lmax * (2.0 * gm.R) ** 2)


def a1_from_mixture(gm: GaussianMixture) -> A1Profile:
    """Profile from mixture dissipativity plus the per-component upper bound.

    Any component index i gives a valid upper bound with L = 2 L_i and
    c_U = 1 - ln a_i; the index with the smallest tractability LHS is kept,
    ties going to the largest weight.
    """
    diss = mixture_dissipativity(gm)
    lip = max(mixture_gradient_lipschitz(gm), diss.alpha)
    base = a1_from_dissipativity(diss, lip)
    grad0 = float(np.linalg.norm(gm.grad_u(np.zeros(gm.dim))))
    best, best_key = None, None
    for i in range(gm.n_components):
        if gm.weights[i] <= 0:
            continue
        prof = A1Profile(c_U=1.0 - math.log(gm.weights[i]), R=base.R, L=2.0 * float(gm.L_i[i]),
                         m=base.m, grad0=grad0, provenance=f"mixture(component={i})",
                         lbar=lip)
        key = (cocoa_lhs(prof), -gm.weights[i])
        if best_key is None or key < best_key:
            best, best_key = prof, key
    return best


def mixture_strong_outside_radius(gm: GaussianMixture) -> tuple[float, float, float]:
    """Radius beyond which s_k/2 <= D^2 U <= 3 s_k/2 for isotropic mixtures.

    Requires a unique smallest precision s_k. Returns (radius, s_k/2, 3 s_k/2).
    """
    if not gm.isotropic:
        raise HypothesisError("the outside-ball curvature bound needs isotropic components")
    k = _unique_min_index(gm)
    if k is None:
        raise HypothesisError("the smallest precision must be attained by a single component")
    s = gm.s
    sk = float(s[k])
    diss = mixture_dissipativity(gm)
    base = math.sqrt(diss.beta / diss.alpha)
    if gm.n_components == 1:
        return base, sk / 2.0, 1.5 * sk
    sm = float(np.min(np.delete(s, k)))
    shat = float(np.max(s))
    R = gm.R
    xk = float(np.linalg.norm(gm.means[k]))
    ak = float(gm.weights[k])
    gap = sm - sk
    s_star = 2.0 * math.sqrt((sk * xk + (sk + sm) * R / 2.0) ** 2 + 4.0 * gap) / gap
    expo = max((sk / (2.0 * c)) * (s_star + xk) ** 2 - (sm / (2.0 * c)) * (s_star - R) ** 2
               for c in (1.0, 2.0))
    log_C = (math.log(2.0) + expo + 2.0 * math.log(s_star + R)
             + math.log(shat + 2.0 * shat ** 2) - 2.0 * math.log(ak) - math.log(sk))
    disc = (sk * xk + sm * R) ** 2 + 4.0 * gap * log_C
    r_star = 2.0 * math.sqrt(max(disc, 0.0)) / gap
    return max(r_star, s_star, base), sk / 2.0, 1.5 * sk


def mixture_flattening_profile(gm: GaussianMixture) -> A1Profile:
    """Profile used for the logconcavity of T o U on isotropic mixtures.

    Same c_U and L as ``a1_from_mixture`` but with the larger radius beyond
    which U is convex, and lbar = 3 s_k / 2, m = alpha.
    """
    base = a1_from_mixture(gm)
    radius, _, upper = mixture_strong_outside_radius(gm)
    return A1Profile(c_U=base.c_U, R=radius, L=base.L, m=base.m, grad0=base.grad0,
                     provenance=base.provenance + "+outside-ball-curvature", lbar=upper)


# ---------------------------------------------------------------------------
# network posteriors
# ---------------------------------------------------------------------------

def bnn_profile(net: BnnPosterior) -> A1Profile:
    a_lo, a_hi = min(net.alpha1, net.alpha2), max(net.alpha1, net.alpha2)
    bK = net.beta * net.n_data
    I = net.n_classes
    ms = net.m_star * net.sigma_max ** 2 + 1.0
    if I < 2:
        raise HypothesisError("at least two classes are needed")
    c_U = bK * math.log(2.0 * (I - 1)) + 8.0 * bK ** 2 * ms / a_hi
    R = (bK * math.sqrt(ms) / a_lo
         + math.sqrt(bK ** 2 * ms + a_lo * bK * (net.c_hat_bias + math.log(2 * I * I - 2 * I))) / a_lo)
    grad0 = float(np.linalg.norm(net.grad_u(np.zeros(net.dim))))
    return A1Profile(c_U=c_U, R=R, L=9.0 * a_hi / 4.0, m=2.0 * a_lo, grad0=grad0,
                     provenance="bnn")


def bnn_condition_lhs(net: BnnPosterior) -> float:
    I = net.n_classes
    ms = net.m_star * net.sigma_max ** 2 + 1.0
    inner = 1.5 * (net.c_hat_bias + math.log(2 * I * I - 2 * I)) + 3.0 * math.sqrt(ms / net.alpha1)
    return 9.0 * math.e * inner * inner


def bnn_tractability(net: BnnPosterior) -> tuple[bool, float]:
    """Whether the network satisfies the dimension condition; (ok, margin)."""
    if net.alpha1 != net.alpha2:
        raise UnsupportedError("the network condition needs equal weight and bias regularization")
    if not math.isclose(net.beta * net.n_data, 1.0, rel_tol=1e-12):
        raise UnsupportedError("the network condition needs likelihood weight 1/K")
    margin = (net.dim - 1) - bnn_condition_lhs(net)
    return margin >= 0.0, margin


def feedforward_neuron_threshold(alpha1: float) -> int:
    """Intermediate-neuron count above which the condition holds to leading order.

    Dropping logarithmic and constant terms with sigma_max = 1 leaves
    81 e m*/alpha1 <= m*(m* + 1)(layers - 2), i.e. a neuron total of about
    81 e / alpha1.
    """
    return math.ceil(81.0 * math.e / alpha1)


def uniform_feedforward_dim(p: int, width: int, n_layers: int, n_classes: int) -> int:
    """Parameter count of a feedforward net with ``n_layers - 1`` hidden layers.

    Equals m(p + 1) + m(m + 1)(n_layers - 2) + I(m + 1).
    """
    return width * (p + 1) + width * (width + 1) * (n_layers - 2) + n_classes * (width + 1)
