import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from flatmc import kernels
from flatmc.density import GaussianMixture, Quadratic
from flatmc.errors import DivergenceError, EnvelopeError, InputError
from flatmc.flatten import FlattenedTarget, FlattenSpec, t_value_batch
from flatmc.profiles import flattened_smoothness, mixture_flattening_profile
from flatmc.samplers import (ChainConfig, chain_rng, envelope_for_mixture, mala_log_accept,
                             rejection_sample_flattened, run_chains, run_mala, run_ula)

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def _pi_cdf_1d(target, spec, lo=-15.0, hi=15.0, n=30001):
    """Normalized CDF of exp(-T(U)) on a fine grid by cumulative trapezoid."""
    x = np.linspace(lo, hi, n)
    dens = np.exp(-t_value_batch(spec, target.u_batch(x[:, None])))
    cdf = integrate.cumulative_trapezoid(dens, x, initial=0.0)
    return x, cdf / cdf[-1]


def _sup_dist(samples, grid, cdf):
    s = np.sort(np.asarray(samples).ravel())
    emp = np.searchsorted(s, grid, side="right") / s.size
    return float(np.max(np.abs(emp - cdf)))


def test_chain_config_validation():
    with pytest.raises(InputError):
        ChainConfig(step=0.0, steps=10)
    with pytest.raises(InputError):
        ChainConfig(step=0.1, steps=10, burn_in=10)
    with pytest.raises(InputError):
        ChainConfig(step=0.1, steps=10, thin=0)
    assert ChainConfig(step=0.1, steps=105, burn_in=5, thin=10).n_kept == 10


def test_ula_pure_diffusion_step():
    cfg = ChainConfig(step=0.5, steps=1, seed=77)
    x = run_ula(lambda x: np.zeros(3), cfg, dim=3)
    xi = chain_rng(77, 0).standard_normal((1, 3))
    assert np.array_equal(x, xi)
    assert np.array_equal(run_ula(lambda x: np.zeros(3), cfg, dim=3), x)


def test_ula_flat_region_has_no_drift():
    gm = GaussianMixture([0.5, 0.5], [[-1.0, 0.0], [1.0, 0.0]], [1.0, 1.0])
    flat = FlattenedTarget(gm, FlattenSpec(50.0))
    h = 0.02
    for backend in BACKENDS:
        x = run_ula(flat, ChainConfig(step=h, steps=20, seed=3), backend=backend)
        xi = chain_rng(3, 0).standard_normal((20, 2))
        assert np.allclose(x, np.cumsum(math.sqrt(2 * h) * xi, axis=0), atol=1e-13)


def test_ula_standard_gaussian_variance():
    gm = GaussianMixture([1.0], [[0.0, 0.0]], [1.0])
    X = run_ula(gm, ChainConfig(step=0.01, steps=400_000, burn_in=10_000, seed=5))
    assert np.all(np.abs(X.var(axis=0) - 1.0) <= 0.15)


def test_ula_flattened_mixture_is_stable():
    gm = GaussianMixture([0.3, 0.7], [[-2.0, 0.0], [2.0, 0.0]], [1.0, 2.0])
    prof = mixture_flattening_profile(gm)
    lhat = flattened_smoothness(prof)
    M = float(gm.u(np.zeros(2))) + prof.c_U + 2 * prof.L * prof.R ** 2
    X = run_ula(FlattenedTarget(gm, FlattenSpec(M)),
                ChainConfig(step=1 / (2 * lhat), steps=1_000_000, thin=1000, seed=1), lhat=lhat)
    assert np.all(np.isfinite(X))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ula_divergence_is_reported():
    with pytest.raises(DivergenceError) as info:
        run_ula(Quadratic(1.0, 2), ChainConfig(step=5.0, steps=5000, seed=0, init=(1.0, 1.0)))
    assert info.value.iteration > 0


def test_step_warning():
    with pytest.warns(UserWarning):
        run_ula(Quadratic(1.0, 1), ChainConfig(step=0.5, steps=2), lhat=4.0)


def test_mala_near_identity_proposal():
    gm = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [1.0, 2.0])
    _, rate = run_mala(gm, ChainConfig(step=1e-12, steps=2000, seed=4, init=(0.3,)))
    assert rate >= 0.999


def test_mala_log_accept_matches_direct_formula(rng):
    gm = GaussianMixture([0.5, 0.5], [[-1.0, 0.0], [1.0, 1.0]], [1.0, 2.0])
    flat = FlattenedTarget(gm, FlattenSpec(1.0))
    h = 0.3
    for _ in range(50):
        x = rng.standard_normal(2) * 2
        vx, gx = flat.eval(x)
        y = x - h * gx + math.sqrt(2 * h) * rng.standard_normal(2)
        vy, gy = flat.eval(y)
        logq = lambda a, b, ga: -np.sum((b - a + h * ga) ** 2) / (4 * h)  # a -> b
        direct = vx - vy + logq(y, x, gy) - logq(x, y, gx)
        assert mala_log_accept(vx, vy, x, y, gx, gy, h) == pytest.approx(direct, abs=1e-12)
        assert 0.0 <= min(1.0, math.exp(direct)) <= 1.0


def test_mala_flattened_mixture_matches_quadrature_cdf(mix1d):
    spec = FlattenSpec(float(mix1d.u(np.zeros(1))) + 1.0)
    flat = FlattenedTarget(mix1d, spec)
    X, rate = run_mala(flat, ChainConfig(step=0.5, steps=1_000_000, burn_in=10_000, thin=1, seed=8))
    assert 0.0 < rate <= 1.0
    grid, cdf = _pi_cdf_1d(mix1d, spec)
    assert _sup_dist(X, grid, cdf) <= 0.02


def test_chains_are_reproducible_and_distinct():
    gm = GaussianMixture([0.5, 0.5], [[-1.0, 0.0], [1.0, 0.0]], [1.0, 2.0])
    cfg = ChainConfig(step=0.2, steps=500, seed=11)
    a, ra = run_chains(gm, cfg, 3)
    b, rb = run_chains(gm, cfg, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b)) and ra == rb
    assert not np.array_equal(a[0], a[1])
    with pytest.raises(InputError):
        run_chains(gm, cfg, 1, method="hmc")


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")
@pytest.mark.parametrize("mala", [True, False])
def test_backends_agree(mala):
    gm = GaussianMixture([0.3, 0.7], [[-2.0, 0.5, 0.0], [2.0, 0.0, 1.0]], [1.0, 2.5])
    flat = FlattenedTarget(gm, FlattenSpec(float(gm.u(np.zeros(3))) + 2.0))
    cfg = ChainConfig(step=0.1, steps=5000, burn_in=100, thin=3, seed=21)
    runs = {}
    for be in ("python", "cython"):
        if mala:
            runs[be] = run_mala(flat, cfg, backend=be)
        else:
            runs[be] = (run_ula(flat, cfg, backend=be), 1.0)
    assert np.allclose(runs["python"][0], runs["cython"][0], atol=1e-9)
    assert runs["python"][1] == runs["cython"][1]


def test_generic_path_matches_kernel_path():
    """A non-mixture target runs the plain loop; a one-mode mixture is the same density."""
    cfg = ChainConfig(step=0.1, steps=300, seed=2)
    X1, r1 = run_mala(Quadratic(1.5, 2), cfg)
    X2, r2 = run_mala(GaussianMixture([1.0], [[0.0, 0.0]], [1.5]), cfg)
    assert np.allclose(X1, X2, atol=1e-12) and r1 == r2


# -- rejection oracle ------------------------------------------------------------------

def test_rejection_unflattened_gaussian():
    gm = GaussianMixture([1.0], [[0.0]], [1.0])
    spec = FlattenSpec(-5.0)
    env = GaussianMixture([1.0], [[0.0]], [1.0])
    X = rejection_sample_flattened(gm, spec, env, 50_000, 1)
    assert abs(X.mean()) < 0.02 and abs(X.var() - 1.0) < 0.03


def test_rejection_matches_quadrature_cdf(mix1d):
    spec = FlattenSpec(float(mix1d.u(np.zeros(1))) + 1.0)
    X = rejection_sample_flattened(mix1d, spec, envelope_for_mixture(mix1d), 100_000, 13)
    grid, cdf = _pi_cdf_1d(mix1d, spec)
    assert _sup_dist(X, grid, cdf) <= 0.01
    again = rejection_sample_flattened(mix1d, spec, envelope_for_mixture(mix1d), 100_000, 13)
    assert np.array_equal(X, again)


def test_rejection_loose_envelope_is_refused():
    gm = GaussianMixture([1.0], [[0.0]], [1.0])
    env = GaussianMixture([1.0], [[0.0]], [1e-10])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(EnvelopeError):
            rejection_sample_flattened(gm, FlattenSpec(-5.0), env, 100, 0)
