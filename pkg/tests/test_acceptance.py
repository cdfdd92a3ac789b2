"""Acceptance suite: one PASS/FAIL line per criterion.

Lines are printed as each test finishes and repeated in the pytest terminal
summary. A failing criterion fails its test; nothing is skipped or relaxed.
"""

import math
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy.optimize import brentq, minimize

from flatmc import adversarial as adv
from flatmc.bounds import (coco2_formula, mixture_condition, rbar, rho_bound_coco, rho_bound_coco2)
from flatmc.density import BnnPosterior, GaussianMixture, synthetic_dataset
from flatmc.estimator import gaussian_bump, quadrature_rho, snis
from flatmc.flatten import FlattenedTarget, FlattenSpec, choose_M, t_value
from flatmc.pipeline import (PipelineConfig, compare_direct_vs_tailmatch, oracle_expectation,
                             run_pipeline, setup)
from flatmc.profiles import (A1Profile, a1_from_mixture, bnn_tractability, check_tractability,
                             feedforward_neuron_threshold, flattened_smoothness,
                             mixture_dissipativity, mixture_flattening_profile)
from flatmc.samplers import envelope_for_mixture, rejection_sample_flattened

from conftest import ACCEPTANCE_LINES

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TWO_E = 2 * math.e


def report(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _fd_grad(fun, x, h):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def _ray_point(u, v, level, r_max):
    """Point t v with U(t v) = level, searched on [0, r_max]."""
    t = brentq(lambda t: u(t * v) - level, 0.0, r_max, xtol=1e-14, rtol=1e-14)
    return t * v


def _branch_points(target, M, rng, n, r_max):
    """n points each with U < M, M < U < M + 2 and U > M + 2, on random rays from the origin."""
    u = lambda x: float(target.u(x))
    out = {"below": [], "band": [], "above": []}
    d = target.dim
    while min(len(v) for v in out.values()) < n:
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        lo, hi = u(np.zeros(d)), M + 8.0
        if u(r_max * v) < hi:
            continue
        out["below"].append(_ray_point(u, v, rng.uniform(lo, M), r_max))
        out["band"].append(_ray_point(u, v, M + rng.uniform(0.02, 1.98), r_max))
        out["above"].append(_ray_point(u, v, M + rng.uniform(2.02, 8.0), r_max))
    return {k: np.array(v[:n]) for k, v in out.items()}


# -- 1 ------------------------------------------------------------------------------------

def _grid_min(gm, box, n):
    x = np.linspace(box[0], box[1], n)[:, None]
    x0 = x[np.argmin(gm.u_batch(x))]
    res = minimize(lambda z: float(gm.u(z)), x0, jac=lambda z: gm.grad_u(z), tol=1e-14)
    return float(res.fun), res.x


def _sandwich_ok(gm, p, x_star, u_min, X):
    U = gm.u_batch(X) - u_min
    r = np.linalg.norm(X, axis=1)
    lower = np.where(r > p.R, p.m / 2 * (r - p.R) ** 2, 0.0)
    upper = p.c_U + p.L / 2 * np.sum((X - x_star) ** 2, axis=1)
    return bool(np.all(lower <= U + 1e-9) and np.all(U <= upper + 1e-9)
                and np.linalg.norm(x_star) <= p.R)


def _case_d1(r):
    gm = GaussianMixture(r.dirichlet([1, 1]), r.uniform(-3, 3, (2, 1)), r.uniform(0.5, 3, 2))
    p = a1_from_mixture(gm)
    M = choose_M(p, float(gm.u([0.0])), "a1")
    u_min, _ = _grid_min(gm, (-6, 6), 24001)
    x_star = gm.means[int(p.provenance.split("=")[1].rstrip(")"))]
    b = rho_bound_coco(p, M, u_min - 1e-9, 1.0, 1)
    h = b.inputs["Rbar"] + 15.0
    X = np.linspace(-h, h, 40001)[:, None]
    rho = quadrature_rho(gm, FlattenSpec(M), [(-h, h)], 40001)
    return rho, [b.value], _sandwich_ok(gm, p, x_star, u_min - 1e-9, X)


def _case_d2(r):
    k = int(r.integers(2, 4))
    w, s, mu = r.dirichlet(np.ones(k)), r.uniform(1.0, 1.3, k), r.standard_normal((k, 2))
    while True:
        gm = GaussianMixture(w, mu, s)
        diss = mixture_dissipativity(gm)
        # Hessian of a mixture is at most the largest precision, so c_U = 0 works around x*.
        p = A1Profile(0.0, math.sqrt(diss.beta / diss.alpha), float(np.max(gm.L_i)), diss.alpha)
        if check_tractability(p, 2)[0]:
            break
        mu = mu / 2
    res = minimize(lambda z: float(gm.u(z)), np.zeros(2), jac=lambda z: gm.grad_u(z), tol=1e-14)
    u_min = float(res.fun) - 1e-9
    M = choose_M(p, float(gm.u(np.zeros(2))), "a1")
    rho = quadrature_rho(gm, FlattenSpec(M), [(-12, 12)] * 2, 801)
    g = np.linspace(-12, 12, 161)
    X = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    bounds = [rho_bound_coco(p, M, u_min, 1.0, 2).value, rho_bound_coco2(p, 1.0, 1.0, 2).value]
    return rho, bounds, _sandwich_ok(gm, p, res.x, u_min, X)


def test_01_oracle_domination():
    r = np.random.default_rng(101)
    worst, ok = 0.0, True
    for case in [_case_d1] * 10 + [_case_d2] * 10:
        rho, bounds, valid = case(r)
        ok &= valid and all(rho <= b * (1 + 1e-6) for b in bounds)
        worst = max(worst, max(rho / b for b in bounds))
    report(1, "quadrature rho below the general (d=1,2) and high-dimensional (d=2) bounds", ok,
           f"20 mixtures, max rho/bound = {worst:.4f}, profiles verified on grid")


# -- 2 ------------------------------------------------------------------------------------

def test_02_snis_bias_and_mse():
    gm = GaussianMixture([0.4, 0.6], [[-2.0], [2.5]], [1.0, 2.0])
    spec = FlattenSpec(float(gm.u([0.0])) + 1.0)
    rho = quadrature_rho(gm, spec, [(-16, 16)], 40001)
    phi = gaussian_bump([-2.0], 1.0)
    truth = gm.expect_gaussian_bump([-2.0], 1.0)
    env = envelope_for_mixture(gm)
    N, reps = 1000, 500
    est = np.array([snis(rejection_sample_flattened(gm, spec, env, N, 9000 + k), gm, spec, phi).estimate
                    for k in range(reps)])
    err = est - truth
    mse, bias = float(np.mean(err ** 2)), float(np.mean(err))
    se = float(np.std(est, ddof=1) / math.sqrt(reps))
    ok = mse <= 4 * rho / N * 1.5 and abs(bias) <= 12 * rho / N + 3 * se
    report(2, "SNIS bias and MSE bounds with exact proposal draws", ok,
           f"rho={rho:.4f} MSE={mse:.3e} (<= {6 * rho / N:.3e}) |bias|={abs(bias):.2e} "
           f"(<= {12 * rho / N + 3 * se:.2e})")


# -- 3 ------------------------------------------------------------------------------------

def test_03_high_dimensional_constants():
    b = rho_bound_coco2(A1Profile(0.0, 0.0, 1.0, 1.0), 1.0, 1.0, 10)
    raw = coco2_formula(0.0, 1.0, 1.0, 10)
    ch = math.exp(1 / (4 * math.e))
    remark = {d: max(TWO_E, coco2_formula(d / (4 * math.e), 1.0, ch, d))
              for d in (2, 3, 5, 10, 100, 1000, 10 ** 5)}
    ok = raw < TWO_E and abs(b.value - 5.4366) <= 1e-4 and max(remark.values()) <= 10.0
    report(3, "high-dimensional bound constants", ok,
           f"formula={raw:.4f}, bound={b.value:.6f}, remark max={max(remark.values()):.4f}")


# -- 4 ------------------------------------------------------------------------------------

def test_04_flattened_logconcavity():
    d = 8
    mu = np.zeros((2, d))
    mu[0, 0], mu[1, 0] = -1.5, 1.5
    gm = GaussianMixture([0.5, 0.5], mu, [1.0, 2.0])
    p = mixture_flattening_profile(gm)
    lhat = flattened_smoothness(p)
    M = choose_M(p, float(gm.u(np.zeros(d))), "a1")
    flat = FlattenedTarget(gm, FlattenSpec(M))
    pts = _branch_points(gm, M, np.random.default_rng(4), 67, 4 * rbar(p, M, -1.0))
    X = np.concatenate(list(pts.values()))[:200]
    lo, hi = math.inf, 0.0
    for x in X:
        h = 1e-5 * max(1.0, np.linalg.norm(x))
        H = np.column_stack([(flat.grad_u(x + h * e) - flat.grad_u(x - h * e)) / (2 * h)
                             for e in np.eye(d)])
        ev = np.linalg.eigvalsh((H + H.T) / 2)
        lo, hi = min(lo, ev[0]), max(hi, float(np.max(np.abs(ev))))
    ok = lo >= -1e-6 * lhat and hi <= lhat
    report(4, "T o U convex and L-hat smooth (d=8)", ok,
           f"min eig={lo:.3e}, max norm={hi:.4f}, L-hat={lhat:.4g}")


# -- 5 ------------------------------------------------------------------------------------

def test_05_flattened_gradient():
    d = 3
    gm = GaussianMixture([0.3, 0.7], [[-1.5, 0.5, 0.0], [1.5, 0.0, -0.5]], [1.0, 2.0])
    spec = FlattenSpec(float(gm.u(np.zeros(d))) + 1.5)
    flat = FlattenedTarget(gm, spec)
    f = lambda x: t_value(spec, float(gm.u(x)))
    pts = _branch_points(gm, spec.M, np.random.default_rng(5), 100, 30.0)
    worst = {}
    for name, X in pts.items():
        errs = []
        for x in X:
            g = flat.grad_u(x)
            fd = _fd_grad(f, x, 1e-6 * max(1.0, np.linalg.norm(x)))
            errs.append(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1.0))
        worst[name] = max(errs)
    ok = max(worst.values()) <= 1e-5
    report(5, "gradient of T o U against central differences", ok,
           ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


# -- 6, 7, 8 ------------------------------------------------------------------------------

def test_06_f3_mass():
    d = 8
    f = adv.build_f3(1.0, 20 * math.exp(24 / d), np.random.default_rng(6).standard_normal(d), d)
    ratio, se = adv.f3_mass_ratio(f, 10 ** 6, 6)
    report(6, "f3 inner-ball mass ratio (d=8)", ratio - 3 * se >= 0.25,
           f"ratio={ratio:.5f} se={se:.1e} (needs ratio - 3se >= 0.25)")


def test_07_f4_mass():
    d = 8
    f = adv.build_f4(1.0, 16.0, np.random.default_rng(7).standard_normal(d), d)
    ratio, se = adv.f4_cap_mass(f, 10 ** 6, 7)
    report(7, "f4 cap mass ratio (d=8, kappa=16)", ratio - 3 * se >= 0.5,
           f"ratio={ratio:.5f} se={se:.1e} (needs ratio - 3se >= 0.5)")


def test_08_counterexample_smoothness():
    d = 16
    r = np.random.default_rng(8)
    f3 = adv.build_f3(1.0, 20 * math.exp(24 / d), r.standard_normal(d), d)
    f4 = adv.build_f4(1.0, 16.0, r.standard_normal(d), d)
    h3 = adv.probe_smoothness(f3, adv.annulus_sampler(f3), 500, "hessian_norm", 81)
    l4 = adv.probe_smoothness(f4, adv.cone_sampler(f4), 10_000, "grad_lipschitz", 82)
    ok = h3 <= 396 * f3.L0 and l4 <= 686 * f4.L1
    report(8, "f3 Hessian and f4 gradient-Lipschitz probes (d=16)", ok,
           f"f3 {h3 / f3.L0:.2f} L0 (<= 396), f4 {l4 / f4.L1:.2f} L1 (<= 686)")


# -- 9 ------------------------------------------------------------------------------------

def _mp_packing(d, angle):
    with mp.workdps(50):
        d = mp.mpf(d)
        log_v = (mp.log(d) + 0.5 * mp.log(2 * mp.pi) - mp.log(d - 1) - 0.5 * mp.log(d + 2)
                 - mp.log(angle) - (d - 2) * mp.log(mp.sin(angle)))
        return float(mp.exp(log_v))


def test_09_intractability_thresholds():
    n = adv.intractability_threshold(100, 1.0, "comp")
    got = adv.packing_lower_bound(100, adv.COMP_ANGLE)
    want = _mp_packing(100, 3 * mp.pi / 8)
    sig6 = float(f"{got:.6g}") == float(f"{want:.6g}")
    report(9, "intractability threshold and packing bound (d=100)", 50 <= n <= 57 and sig6,
           f"threshold={n}, packing={got:.10g} vs {want:.10g}")


# -- 10 -----------------------------------------------------------------------------------

def test_10_end_to_end_pipeline():
    base = PipelineConfig.from_yaml(CONFIGS / "mixture_d16.yaml")
    target = setup(base)[0]
    lhs, rhs = mixture_condition(target)
    tf = base.test_functions[0]
    truth = oracle_expectation(target, tf)

    from dataclasses import replace
    cover_cfg = replace(base, replications=100,
                        sampler=replace(base.sampler, steps=10 ** 6, burn_in=50_000))
    rows = run_pipeline(cover_cfg).rows
    hits = sum(abs(r["estimate"] - truth) <= 3 * r["se"] for r in rows)

    cmp_cfg = replace(base, replications=50)
    win = compare_direct_vs_tailmatch(cmp_cfg).win_rate(tf["name"])

    ok = lhs <= rhs and hits >= 95 and win >= 0.8
    report(10, "end-to-end pipeline on the d=16 mixture", ok,
           f"mixture condition {'met' if lhs <= rhs else 'NOT met'} (LHS={lhs:.4g} > d-1={rhs:g}); "
           f"coverage {hits}/100; tail-matching wins {win:.0%} of 50")


# -- 11 -----------------------------------------------------------------------------------

def _lhs_direct(width, n_classes):
    return 9 * math.e * (1.5 * math.log(2 * n_classes ** 2 - 2 * n_classes)
                         + 3 * math.sqrt(width + 1)) ** 2


def test_11_network_condition():
    X, y = synthetic_dataset(2, 2, 10, 11)
    agree, outcomes = True, []
    for width in (4, 8, 16, 24, 32):
        for layers in (2, 4, 8, 12, 16):
            net = BnnPosterior((2,) + (width,) * (layers - 1) + (2,), X, y, alpha1=1.0, alpha2=1.0)
            ok, margin = bnn_tractability(net)
            want = net.dim - 1 >= _lhs_direct(width, 2)
            agree &= ok == want and math.isclose(margin, net.dim - 1 - _lhs_direct(width, 2),
                                                 rel_tol=1e-12, abs_tol=1e-9)
            outcomes.append(ok)
    heur = feedforward_neuron_threshold(1.0)
    n_ok = sum(outcomes)
    report(11, "network dimension condition and neuron heuristic",
           agree and 0 < n_ok < len(outcomes) and heur == 221,
           f"checker {'agrees' if agree else 'disagrees'} on {len(outcomes)} nets "
           f"({n_ok} satisfied), heuristic={heur}")
