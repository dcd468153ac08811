import numpy as np
import pytest
from scipy import integrate, stats

from eaton_lab import kernels
from eaton_lab.kernels import (WeightConfig, detailed_balance_check, eaton_R_density, eaton_R_moment,
                               partition_rectangles, reduced_eaton_kernel, weighted_eaton_kernel)
from eaton_lab.model import PriorParams, posterior_density
from eaton_lab.quadrature import QuadratureSpec
from eaton_lab.sampling import ks_distance

# Nested scipy quad over (w, beta), frozen.
M1_AT_50 = 50.01168854594283
M2_AT_50 = 2912.5571913645595


def _rtilde_direct(beta, alpha, params):
    f = lambda w: posterior_density(beta, w, params) * stats.ncx2.pdf(w, params.p, alpha)
    hi = alpha + 60 * np.sqrt(alpha + 1) + 80
    return integrate.quad(f, 0, hi, points=[alpha], limit=400, epsabs=0, epsrel=1e-11)[0]


@pytest.mark.parametrize("beta,alpha", [(2.0, 1.0), (45.0, 50.0), (0.3, 5.0)])
def test_rtilde_against_nested_quadrature(params, beta, alpha):
    assert eaton_R_density(beta, alpha, params) == pytest.approx(_rtilde_direct(beta, alpha, params), rel=1e-8)


def test_rtilde_moments_frozen(params):
    assert eaton_R_moment(50.0, 1, params) == pytest.approx(M1_AT_50, rel=1e-10)
    assert eaton_R_moment(50.0, 2, params) == pytest.approx(M2_AT_50, rel=1e-10)


def test_densities_integrate_to_one(params):
    for alpha in (0.5, 20.0, 300.0):
        hi = alpha + 40 * np.sqrt(alpha + 1) + 80
        for fn in (kernels.eaton_R_density, kernels.T_tilde_density):
            val = integrate.quad(lambda b: fn(b, alpha, params), 0, hi, points=[alpha],
                                 limit=400, epsrel=1e-11)[0]
            assert val == pytest.approx(1.0, abs=1e-8)


def test_engine_first_moment_matches_moment_route(params):
    eng = kernels._engine_for(params)
    a = np.array([3.0, 50.0, 700.0])
    assert np.allclose(eng.first_moment(a), eaton_R_moment(a, 1, params), rtol=1e-10)


def test_rtilde_moment_expansion(params):
    a = np.array([50.0, 200.0, 1000.0])
    m1 = eaton_R_moment(a, 1, params)
    m2 = eaton_R_moment(a, 2, params)
    r1 = np.abs(m1 - a) * a
    r2 = np.abs(m2 - a * a - 8 * a)
    assert np.all(r1 <= 2 * r1[0])
    assert np.all(r2 <= 2 * r2[0])


def test_normalizer_positive(params):
    t = kernels.T_normalizer(np.geomspace(1e-3, 1e4, 9), params)
    assert np.all(t > 2.0)


def test_detailed_balance(params):
    rects = partition_rectangles(0.0, 20.0, 4)
    q = QuadratureSpec(1e-9)
    R = reduced_eaton_kernel(params)
    T = weighted_eaton_kernel(params)
    assert detailed_balance_check(R, rects, q) <= 1e-6
    assert detailed_balance_check(T, rects, q) <= 1e-6
    assert detailed_balance_check(T.with_measure(R.sym_measure_density), rects, q) >= 1e-2


def test_lebesgue_image_balance_and_mean():
    for p in (1, 3):
        k = kernels.lebesgue_image_kernel(p, 1.0)
        assert detailed_balance_check(k, partition_rectangles(0.0, 12.0, 3), QuadratureSpec(1e-9)) <= 1e-6
        alpha = 7.0
        mass = integrate.quad(lambda b: k.density(b, alpha), 0, 200, limit=300)[0]
        mean = integrate.quad(lambda b: b * k.density(b, alpha), 0, 200, limit=300)[0]
        # increment second moment: (d 2p + 2p 2(p+2)) / (2p + d)
        expect = alpha + (2.0 * p + 4.0 * p * (p + 2)) / (2 * p + 1.0)
        assert mass == pytest.approx(1.0, abs=1e-9)
        assert mean == pytest.approx(expect, rel=1e-8)


def test_perturbed_prior_balance(params):
    u = lambda z: 1.5 + 0.5 * np.sin(np.asarray(z, float))
    prior = kernels.perturbed_prior(params, u, 3.0)
    k = reduced_eaton_kernel(params, prior=prior)
    assert k.meta["perturbed"]
    assert detailed_balance_check(k, partition_rectangles(0.0, 10.0, 3), QuadratureSpec(1e-9)) <= 1e-6
    with pytest.raises(NotImplementedError):
        k.sampler(np.ones(2), np.random.default_rng(0))


def test_bounded_perturbation_rejects():
    base = kernels.RadialPrior.from_params(PriorParams()).measure()
    with pytest.raises(ValueError):
        kernels.bounded_perturbation(base, lambda z: 1.0 + np.asarray(z, float), 2.0)
    with pytest.raises(ValueError):
        kernels.bounded_perturbation(base, lambda z: np.ones_like(z), 1.0)


def test_eaton_R_sampler_mean(params, rng):
    alpha = 200.0
    draws = kernels.eaton_R_sample(np.full(20_000, alpha), params, rng)
    m1 = eaton_R_moment(alpha, 1, params)
    sd = np.sqrt(eaton_R_moment(alpha, 2, params) - m1 * m1)
    assert abs(draws.mean() - m1) < 4 * sd / np.sqrt(draws.size)


def test_weighted_samplers_agree(params, rng):
    alpha = 100.0
    tab = kernels.T_tilde_table(alpha, params)
    exact = kernels.T_tilde_sample_exact(np.full(20_000, alpha), params, rng=rng)
    assert ks_distance(exact, tab.cdf) < 0.015
    m = integrate.quad(lambda b: b * kernels.T_tilde_density(b, alpha, params), 0, 600,
                       points=[alpha], limit=300)[0]
    assert abs(exact.mean() - m) < 4 * exact.std() / np.sqrt(exact.size)


def test_fullspace_T_increment_moments(rng):
    p, d = 3, 2.0
    inc = kernels.fullspace_T_increment(p, d, rng, 200_000)
    r2 = np.sum(inc * inc, axis=1)
    # E||inc||^2 + d equals the normaliser 2p + d under N(0,2I) weighting
    expect = (d * 2 * p + 2 * p * 2 * (p + 2)) / (2 * p + d)
    assert r2.mean() == pytest.approx(expect, rel=0.01)
    assert np.allclose(inc.mean(axis=0), 0.0, atol=0.02)


def test_fullspace_T_density_normalised():
    k = kernels.fullspace_T_kernel(2, 1.0)
    val = integrate.dblquad(lambda y, x: k.density(np.array([x, y]), np.zeros(2)), -15, 15, -15, 15)[0]
    assert val == pytest.approx(1.0, abs=1e-8)


def test_phi_membership():
    f = kernels.squared_distance_weight(1.0)
    pairs = [(np.array([x]), np.array([y])) for x in (-3.0, 0.0, 2.0) for y in (-1.0, 5.0)]
    ok, worst = kernels.phi_membership_check(lambda t: t, f, 1.0, pairs)
    assert ok and worst < 1
    ok, _ = kernels.phi_membership_check(lambda t: t ** 2, f, 1.0, pairs)
    assert not ok


def test_assumption_T(params):
    rep = kernels.assumption_T_check(params, WeightConfig())
    assert rep.passed
    assert rep.lower_bound >= 1.0
    vals = [v for _, v in rep.compact_integrals]
    assert all(np.isfinite(vals)) and vals == sorted(vals)


def test_weight_config_validation():
    with pytest.raises(ValueError):
        WeightConfig(c=0.0)
