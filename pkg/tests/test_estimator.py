import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from flatmc.density import GaussianMixture, Quadratic
from flatmc.errors import BoxTooSmallError, InputError, UnsupportedError
from flatmc.estimator import (affine, batch_means_se, bootstrap_se, coordinate_mean, empirical_rho,
                              ess, gaussian_bump, log_weights, quadrature_rho, snis,
                              snis_from_log_weights, weighted_samples)
from flatmc.estimator import test_function_from_config as tf_from_config
from flatmc.flatten import FlattenSpec, t_value
from flatmc.samplers import envelope_for_mixture, rejection_sample_flattened


class Shifted:
    def __init__(self, base, a):
        self.base, self.a, self.dim = base, a, base.dim

    def u_batch(self, X):
        return self.base.u_batch(X) + self.a


def _quad_rho_1d(gm, spec):
    """rho from scipy adaptive quadrature with the exact T, independent of the grid path."""
    pts = [float(m) for m in gm.means[:, 0]]
    u = lambda x: float(gm.u([x]))
    T = lambda x: t_value(spec, u(x))
    q = lambda f: integrate.quad(f, -30, 30, points=pts, limit=400, epsabs=0, epsrel=1e-11)[0]
    return q(lambda x: math.exp(T(x) - 2 * u(x))) * q(lambda x: math.exp(-T(x))) / q(
        lambda x: math.exp(-u(x))) ** 2


def _mu_1d(gm, f):
    dens = lambda x: math.exp(-gm.u([x]))
    pts = [float(m) for m in gm.means[:, 0]]
    num = integrate.quad(lambda x: f(x) * dens(x), -30, 30, points=pts, limit=400)[0]
    return num / integrate.quad(dens, -30, 30, points=pts, limit=400)[0]


@pytest.fixture
def flat1d(mix1d):
    return mix1d, FlattenSpec(float(mix1d.u(np.zeros(1))) + 1.0)


# -- ess and snis -------------------------------------------------------------------------

def test_ess_examples():
    assert ess(np.zeros(10)) == pytest.approx(10.0, rel=1e-14)
    assert ess(np.array([0.0] + [-800.0] * 9)) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(InputError):
        ess([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=200))
def test_ess_between_one_and_n(lw):
    e = ess(lw)
    assert 1.0 - 1e-9 <= e <= len(lw) * (1 + 1e-12)


def test_snis_constant_function(flat1d, rng):
    gm, spec = flat1d
    X = rng.standard_normal((500, 1)) * 3
    res = snis(X, gm, spec, lambda X: np.ones(len(X)))
    assert res.estimate == 1.0 and res.n == 500 and 0 < res.ess <= 500


def test_snis_without_flattening_is_sample_mean(rng):
    gm = GaussianMixture([1.0], [[0.0]], [1.0])
    spec = FlattenSpec(-3.0)
    X = rng.standard_normal((300, 1))
    res = snis(X, gm, spec, coordinate_mean(0))
    assert res.estimate == pytest.approx(X[:, 0].mean(), rel=1e-13)
    assert res.ess == pytest.approx(300.0, rel=1e-13) and res.max_log_weight == 0.0


def test_snis_with_exact_proposal_draws(flat1d):
    gm, spec = flat1d
    X = rejection_sample_flattened(gm, spec, envelope_for_mixture(gm), 50_000, 3)
    phi = gaussian_bump([2.5], 1.0)
    res = snis(X, gm, spec, phi, bootstrap=200, seed=4)
    truth = _mu_1d(gm, lambda x: math.exp(-(x - 2.5) ** 2 / 2))
    assert abs(res.estimate - truth) <= 3 * res.se


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-100, 100))
def test_snis_shift_invariance(seed, a):
    r = np.random.default_rng(seed)
    gm = GaussianMixture([0.5, 0.5], [[-1.5], [1.5]], [1.0, 3.0])
    X = r.standard_normal((200, 1)) * 2
    M = float(r.uniform(-0.5, 2.0))
    phi = gaussian_bump([1.5], 0.7)
    base = snis(X, gm, FlattenSpec(M), phi)
    moved = snis(X, Shifted(gm, a), FlattenSpec(M + a), phi)
    assert moved.estimate == pytest.approx(base.estimate, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-300, 300)), min_size=1, max_size=100))
def test_snis_estimate_is_bounded(pairs):
    f, lw = map(np.array, zip(*pairs))
    res = snis_from_log_weights(f, lw)
    assert f.min() <= res.estimate <= f.max()


def test_weights_at_least_one(flat1d, rng):
    gm, spec = flat1d
    X = rng.standard_normal((1000, 1)) * 4
    lw = log_weights(X, gm, spec)
    assert np.all(lw >= 0.0)
    assert np.all(lw <= spec.M + 1 - gm.u_batch(X).min() + 1e-12)
    ws = weighted_samples(X[:3], gm, spec)
    assert [w.log_weight for w in ws] == list(lw[:3])


def test_standard_errors_agree_for_iid(flat1d):
    gm, spec = flat1d
    X = rejection_sample_flattened(gm, spec, envelope_for_mixture(gm), 40_000, 9)
    f = gaussian_bump([2.5], 1.0)(X)
    lw = log_weights(X, gm, spec)
    a, b = bootstrap_se(f, lw, 200, 1), batch_means_se(f, lw, 20)
    assert 0.5 <= a / b <= 2.0


# -- rho -----------------------------------------------------------------------------------

def test_empirical_rho_trivial(rng):
    gm = GaussianMixture([1.0], [[0.0]], [1.0])
    X = rng.standard_normal((100, 1))
    assert empirical_rho(X, gm, FlattenSpec(-10.0)) == 1.0
    same = np.repeat(X[:1], 100, axis=0)
    assert empirical_rho(same, gm, FlattenSpec(50.0)) == pytest.approx(1.0, abs=1e-12)


def test_quadrature_rho_no_flattening():
    gm = GaussianMixture([1.0], [[0.0]], [1.0])
    assert quadrature_rho(gm, FlattenSpec(-5.0), [(-12, 12)], 4001) == pytest.approx(1.0, abs=1e-8)


def test_quadrature_rho_grid_refinement():
    q = Quadratic(1.0, 1)
    spec = FlattenSpec(0.0)
    a = quadrature_rho(q, spec, [(-12, 12)], 6001)
    b = quadrature_rho(q, spec, [(-12, 12)], 12001)
    assert a == pytest.approx(b, abs=1e-6) and a > 1.0


def test_quadrature_rho_matches_adaptive_quadrature(flat1d):
    gm, spec = flat1d
    grid = quadrature_rho(gm, spec, [(-14, 14)], 20001)
    assert grid == pytest.approx(_quad_rho_1d(gm, spec), rel=1e-6)


def test_quadrature_rho_two_dimensional_refinement():
    gm = GaussianMixture([0.5, 0.5], [[-1.5, 0.0], [1.5, 0.5]], [1.0, 2.0])
    spec = FlattenSpec(0.5)
    a = quadrature_rho(gm, spec, [(-10, 10), (-9, 9)], 401)
    b = quadrature_rho(gm, spec, [(-10, 10), (-9, 9)], 801)
    assert a == pytest.approx(b, rel=1e-6) and a >= 1.0 - 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-1, 4))
def test_quadrature_rho_at_least_one(seed, dM):
    r = np.random.default_rng(seed)
    gm = GaussianMixture(r.dirichlet(np.ones(2)), r.uniform(-3, 3, (2, 1)), r.uniform(0.5, 3, 2))
    spec = FlattenSpec(dM)
    assert quadrature_rho(gm, spec, [(-16, 16)], 8001) >= 1.0 - 1e-6


def test_quadrature_rho_errors():
    gm3 = GaussianMixture([1.0], [[0.0, 0.0, 0.0]], [1.0])
    with pytest.raises(UnsupportedError):
        quadrature_rho(gm3, FlattenSpec(0.0), [(-5, 5)] * 3, 11)
    gm = GaussianMixture([1.0], [[0.0]], [1.0])
    with pytest.raises(BoxTooSmallError):
        quadrature_rho(gm, FlattenSpec(0.0), [(-2, 2)], 101)


def test_empirical_rho_matches_quadrature(flat1d):
    gm, spec = flat1d
    X = rejection_sample_flattened(gm, spec, envelope_for_mixture(gm), 100_000, 17)
    rho = empirical_rho(X, gm, spec)
    r = np.random.default_rng(0)
    boots = [empirical_rho(X[r.integers(0, len(X), len(X))], gm, spec) for _ in range(200)]
    assert abs(rho - _quad_rho_1d(gm, spec)) <= 3 * np.std(boots, ddof=1)


# -- test functions ---------------------------------------------------------------------------

def test_builtin_test_functions():
    X = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.array_equal(coordinate_mean(1)(X), [2.0, -1.0])
    assert np.allclose(affine([1.0, 1.0], 0.5)(X), [3.5, 2.5])
    assert gaussian_bump([1.0, 2.0], 1.0)(X)[0] == 1.0
    f = tf_from_config({"kind": "bump", "center": [0, 0], "width": 2.0}, 2)
    assert np.all((f(X) > 0) & (f(X) <= 1))
    assert np.array_equal(tf_from_config({"kind": "mean", "coord": 1}, 2)(X), X[:, 1])
    with pytest.raises(InputError):
        tf_from_config({"kind": "spline"}, 2)
