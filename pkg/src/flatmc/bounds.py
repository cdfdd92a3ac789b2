"""Chi-square bounds rho, estimator error bounds and sample-size planning.

All Gamma-function and power terms are handled in log space so that the
bounds stay finite for dimensions in the thousands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .density import GaussianMixture
from .errors import InputError, PreconditionError, UnsupportedError
from .profiles import A1Profile, check_tractability


@dataclass(frozen=True)
class RhoBound:
    value: float
    regime: str  # "capped" or "formula"
    inputs: dict = field(default_factory=dict)


def _combine(c: float, log_formula: float, inputs: dict) -> RhoBound:
    cap = 2.0 * math.exp(c)
    formula = math.exp(log_formula) if log_formula < 700 else math.inf
    if formula <= cap:
        return RhoBound(cap, "capped", {**inputs, "formula": formula})
    return RhoBound(formula, "formula", {**inputs, "formula": formula})


def rbar(profile: A1Profile, M: float, u_min: float) -> float:
    """R + sqrt((2/m)(M - u_min)), the radius outside which U > M."""
    if M < u_min:
        raise InputError("M must be at least the lower bound on min U")
    return profile.R + math.sqrt(2.0 / profile.m * (M - u_min))


def rho_bound_coco(profile: A1Profile, M: float, u_min: float, c: float, d: int) -> RhoBound:
    """General bound on rho from the two-sided growth profile.

    For d >= 2 the bound is 2e^c or

        e^{2c_U}(2+e^c)(L Rb^2)^d / (2^{d-1} Gamma(d/2+1)^2)
        + e^{2c_U}(1+e^c) 2^d / sqrt(d(d-1)) * sum_{i<d} (L Rb^2 (L/m) / (e(d-1)))^{d-1/2-i/2}

    whichever is larger; d = 1 has its own closed form.
    """
    if d < 1 or c <= 0:
        raise InputError("need d >= 1 and c > 0")
    Rb = rbar(profile, M, u_min)
    L, m, cU = profile.L, profile.m, profile.c_U
    inputs = {"d": d, "c": c, "M": M, "u_min": u_min, "Rbar": Rb, "profile": profile}
    if Rb == 0.0:
        return _combine(c, -math.inf, inputs)
    if d == 1:
        val = math.exp(2 * cU) / math.pi * (
            4.0 * (2.0 + math.exp(c)) * L * Rb ** 2
            + 2.0 * math.sqrt(2.0) * (1.0 + math.exp(c)) * math.sqrt(L) * Rb * math.sqrt(L / m))
        return _combine(c, math.log(val), inputs)
    log_lr2 = math.log(L) + 2.0 * math.log(Rb)
    log_t1 = (2 * cU + math.log(2.0 + math.exp(c)) + d * log_lr2
              - (d - 1) * math.log(2.0) - 2.0 * gammaln(d / 2.0 + 1.0))
    log_q = log_lr2 + math.log(L / m) - 1.0 - math.log(d - 1.0)
    expo = d - 0.5 - 0.5 * np.arange(d)
    log_sum = float(logsumexp(expo * log_q))
    log_t2 = (2 * cU + math.log(1.0 + math.exp(c)) + d * math.log(2.0)
              - 0.5 * math.log(d * (d - 1.0)) + log_sum)
    return _combine(c, float(np.logaddexp(log_t1, log_t2)), inputs)


def coco2_formula(c_U: float, c: float, c_hat: float, d: int) -> float:
    """Formula branch of the high-dimensional bound (no condition check)."""
    if d < 2:
        raise UnsupportedError("the high-dimensional bound needs d >= 2")
    ech = math.e * c_hat
    if ech <= 2.0:
        raise InputError("need e * c_hat > 2")
    log_t1 = (math.log(2.0) + 2 * c_U + math.log(2.0 + math.exp(c)) - 1.0
              - 2 * d * math.log(c_hat) - 0.5 * math.log(d * math.pi / 2.0))
    log_t2 = (2 * c_U + math.log(1.0 + math.exp(c)) - d * math.log(ech / 2.0)
              - math.log(1.0 - 2.0 / ech) - 0.5 * math.log(d * (d - 1.0)))
    return math.exp(float(np.logaddexp(log_t1, log_t2)))


def rho_bound_coco2(profile: A1Profile, c_hat: float, c: float, d: int,
                    u0: float | None = None) -> RhoBound:
    """High-dimensional bound, valid when the tractability condition holds.

    The threshold behind it is M = U(0) + c_U + 2 L R^2; pass ``u0`` to have
    that M echoed in the result.
    """
    if d < 2:
        raise UnsupportedError("the high-dimensional bound is vacuous for d = 1")
    ok, margin = check_tractability(profile, d, c_hat)
    if not ok:
        raise PreconditionError(f"tractability condition fails (margin {margin:.6g})", margin)
    val = coco2_formula(profile.c_U, c, c_hat, d)
    inputs = {"d": d, "c": c, "c_hat": c_hat, "profile": profile}
    if u0 is not None:
        inputs["M"] = u0 + profile.c_U + 2.0 * profile.L * profile.R ** 2
    return _combine(c, math.log(val), inputs)


def mixture_condition(gm: GaussianMixture) -> tuple[float, float]:
    """(LHS, RHS) of the mixture dimension condition.

    LHS = 4 e k (sqrt(2L) R k + k^(1/2)(4(1 - ln a) + 12 L R^2 k^2)^(1/2))^2 with
    k = max L_j/m_j, L = max L_j, a = max a_j; RHS = d - 1.
    """
    kappa = float(np.max(gm.L_i / gm.m_i))
    L = float(np.max(gm.L_i))
    a = float(np.max(gm.weights))
    R = gm.R
    inner = (math.sqrt(2 * L) * R * kappa
             + math.sqrt(kappa) * math.sqrt(4 * (1 - math.log(a)) + 12 * L * R * R * kappa ** 2))
    return 4 * math.e * kappa * inner * inner, float(gm.dim - 1)


def rho_bound_mixture(gm: GaussianMixture, c: float) -> RhoBound:
    lhs, rhs = mixture_condition(gm)
    if lhs > rhs:
        raise PreconditionError(
            f"mixture condition fails: LHS {lhs:.6g} > d - 1 = {rhs:.6g}", rhs - lhs)
    d = gm.dim
    a = float(np.max(gm.weights))
    log_t1 = (math.log(2 * math.e) - 2 * math.log(a) + math.log(2 + math.exp(c))
              - 0.5 * math.log(d * math.pi / 2))
    log_t2 = (2.0 - 2 * math.log(a) + math.log(1 + math.exp(c)) - d * math.log(math.e / 2)
              - math.log(1 - 2 / math.e) - 0.5 * math.log(d * (d - 1.0)))
    return _combine(c, float(np.logaddexp(log_t1, log_t2)),
                    {"d": d, "c": c, "condition_lhs": lhs, "condition_rhs": rhs})


def snis_error_bounds(rho: float, N: int) -> tuple[float, float]:
    """(bias bound 12 rho/N, MSE bound 4 rho/N) for |phi| <= 1."""
    if rho < 1 or N < 1:
        raise InputError("need rho >= 1 and N >= 1")
    return 12.0 * rho / N, 4.0 * rho / N


def sample_size_plan(rho: float, eps_bar: float, eps_prime: float):
    """Samples and per-sample TV budget for target accuracy.

    Returns (N, eps, (bias bound, MSE bound)) with N = ceil(16 rho/(eps_bar eps')^2),
    eps = eps_bar/(4N), bias <= 2 eps_bar + eps', MSE <= 4 eps_bar + eps'^2.
    """
    if not (0 < eps_bar <= 1) or eps_prime <= 0 or rho < 1:
        raise InputError("need eps_bar in (0, 1], eps' > 0 and rho >= 1")
    N = math.ceil(16.0 * rho / (eps_bar * eps_prime) ** 2)
    return N, eps_bar / (4.0 * N), (2 * eps_bar + eps_prime, 4 * eps_bar + eps_prime ** 2)
