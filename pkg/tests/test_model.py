import numpy as np
import pytest
from scipy import integrate, special, stats

from eaton_lab import model
from eaton_lab.model import (MarginalDivergenceError, PriorParams, Properness, marginal,
                             posterior_density, posterior_moment, posterior_sample)
from eaton_lab.sampling import TableError, InverseCDFTable, ks_distance, sample_tilted_ncchisq

# Frozen from nested scipy.integrate.quad runs at p=3, a=1, b=3/2, independent of
# the package quadrature.
POSTERIOR_ORACLE = {
    0.0: (1.5134286059861968, 4.5134286059861966),
    10.0: (7.7901485428101696, 91.4378367774335),
    100.0: (97.00178138176693, 9803.210089417762),
}
MARGINAL_AT_5 = 1.0607776305501384
LAPLACE_PRIOR = 1.9930833260570295   # int exp(-beta) nu~(d beta)


def test_params_defaults_and_validation():
    p = PriorParams(p=5)
    assert p.b == 2.5
    assert p.properness is Properness.IMPROPER
    assert PriorParams(3, 1.0, 2.0).properness is Properness.PROPER
    with pytest.raises(ValueError):
        PriorParams(p=0)
    with pytest.raises(ValueError):
        PriorParams(3, -1.0)


def test_sigma_finite_screen():
    bad = PriorParams(3, 0.0, 1.5)
    assert not bad.sigma_finite_marginal
    with pytest.raises(MarginalDivergenceError):
        marginal(1.0, bad)
    ok = PriorParams(3, 0.0, 1.0)
    assert ok.sigma_finite_marginal
    assert np.isfinite(marginal(1.0, ok))


def test_marginal_frozen(params):
    assert marginal(5.0, params) == pytest.approx(MARGINAL_AT_5, rel=1e-10)


def test_marginal_self_convergence(params):
    from eaton_lab.quadrature import QuadratureSpec
    coarse = marginal(37.0, params, QuadratureSpec(1e-6))
    fine = marginal(37.0, params, QuadratureSpec(1e-12))
    assert abs(coarse - fine) <= 1e-6 * fine


@pytest.mark.parametrize("w", sorted(POSTERIOR_ORACLE))
def test_posterior_moments_frozen(params, w):
    m1, m2 = POSTERIOR_ORACLE[w]
    assert posterior_moment(w, 1, params) == pytest.approx(m1, rel=1e-9)
    assert posterior_moment(w, 2, params) == pytest.approx(m2, rel=1e-9)


def test_posterior_density_normalised(params):
    for w in (0.0, 3.0, 400.0):
        hi = w + 40 * np.sqrt(w + 1) + 60
        val, _ = integrate.quad(lambda b: float(posterior_density(b, w, params)), 0, hi,
                                points=[max(w - 3, 1.0)], limit=400, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-7)


def test_laplace_transform_against_gauss_hermite(params):
    # full-space integral of exp(-|theta|^2) (1 + |theta|^2)^(-3/2) on R^3
    x, wts = special.roots_hermite(60)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = wts[:, None, None] * wts[None, :, None] * wts[None, None, :]
    gh = np.sum(W * (1.0 + X**2 + Y**2 + Z**2) ** -1.5)
    red, _ = integrate.quad(lambda b: float(model.reduced_prior_density(b, params)) * np.exp(-b),
                            0, np.inf)
    assert gh == pytest.approx(LAPLACE_PRIOR, rel=1e-8)
    assert red == pytest.approx(LAPLACE_PRIOR, rel=1e-8)


def test_reduced_likelihood_sphere_mc(rng):
    # ||x||^2 with x ~ N(theta, I), ||theta||^2 = beta, is the reduced likelihood
    p, beta = 3, 4.0
    theta = model.sphere_sample(beta, p, rng)
    assert theta @ theta == pytest.approx(beta)
    w = np.sum((theta + rng.standard_normal((200_000, p))) ** 2, axis=1)
    cdf = lambda t: stats.ncx2.cdf(t, p, beta)
    assert ks_distance(w, cdf) < 0.006
    grid = np.array([0.5, 3.0, 9.0])
    assert np.allclose(model.reduced_likelihood(grid, beta, p), stats.ncx2.pdf(grid, p, beta), rtol=1e-10)


def test_reduced_prior_mass_grows(params):
    nu = model.reduced_prior(params)
    m1, m2 = nu.mass(10.0), nu.mass(1000.0)
    assert 0 < m1 < m2 < np.inf


def test_posterior_mean_tracks_w_minus_p(params):
    w = np.array([10.0, 100.0, 1000.0, 1e4])
    r = np.array([abs(posterior_moment(v, 1, params) - (v - params.p)) for v in w])
    assert np.all(r <= 2 * r[0])


def test_posterior_sample_matches_table(params, rng):
    w = 10.0
    tab = model.posterior_table(w, params)
    draws = posterior_sample(w, params, rng, size=40_000)
    assert ks_distance(draws, tab.cdf) < 0.01
    m1 = POSTERIOR_ORACLE[w][0]
    se = np.sqrt(POSTERIOR_ORACLE[w][1] - m1 * m1) / np.sqrt(draws.size)
    assert abs(draws.mean() - m1) < 4 * se


def test_exact_tilted_sampler_agrees_with_moments(params, rng):
    w = 10.0
    d = sample_tilted_ncchisq(np.full(40_000, w), 0, params, rng)
    m1, m2 = POSTERIOR_ORACLE[w]
    se = np.sqrt(m2 - m1 * m1) / np.sqrt(d.size)
    assert abs(d.mean() - m1) < 4 * se


def test_inverse_cdf_table_refuses_truncation():
    with pytest.raises(TableError):
        InverseCDFTable(lambda x: np.exp(-x), 0.0, 5.0)
    t = InverseCDFTable(lambda x: np.exp(-x), 0.0, 60.0)
    assert t.cdf(1.0) == pytest.approx(1 - np.exp(-1.0), abs=1e-7)


def test_posterior_mean_rotation_equivariant(params, rng):
    x = rng.standard_normal(3) * 2
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    a = model.posterior_mean_fullspace(q @ x, params)
    b = q @ model.posterior_mean_fullspace(x, params)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


def test_posterior_mean_shrinks(params):
    r = np.array([0.1, 1.0, 3.0, 10.0, 50.0])
    rad = model.shrinkage_radius(r, params)
    assert np.all(rad < r)
    assert np.all(rad > 0)
    assert np.all(np.diff(rad) > 0)
    # far from the origin the shrinkage fades
    assert rad[-1] / r[-1] > 0.99


def test_posterior_mean_batch_matches_single(params, rng):
    x = rng.standard_normal((5, 3)) * 3
    batch = model.posterior_mean_fullspace(x, params)
    single = np.array([model.posterior_mean_fullspace(v, params) for v in x])
    assert np.allclose(batch, single, rtol=1e-12)


def test_shrinkage_against_direct_3d_quadrature(params):
    # E[theta_1 | x = (r,0,0)] by direct spherical quadrature, p = 3
    r = 2.0

    def weight(rho, u):
        return rho * rho * (1 + rho * rho) ** -1.5 * np.exp(-0.5 * (rho * rho - 2 * rho * r * u + r * r))

    num, _ = integrate.dblquad(lambda u, rho: rho * u * weight(rho, u), 0, 40, -1, 1)
    den, _ = integrate.dblquad(lambda u, rho: weight(rho, u), 0, 40, -1, 1)
    assert model.shrinkage_radius(r, params)[0] == pytest.approx(num / den, rel=1e-7)


def test_mle_risk_is_p(rng):
    risk, se = model.mc_risk(model.mle, np.array([1.0, -2.0, 0.5]), 20_000, rng)
    assert abs(risk - 3.0) < 4 * se


def test_james_stein_at_origin(rng):
    risk, se = model.mc_risk(model.james_stein, np.zeros(3), 20_000, rng)
    assert abs(risk - 2.0) < 4 * se


def test_mc_risk_rejects_tiny_runs(rng):
    with pytest.raises(ValueError):
        model.mc_risk(model.mle, np.zeros(3), 10, rng)


def test_observation_from_x():
    ob = model.Observation.from_x([3.0, 4.0])
    assert ob.w == 25.0
    assert np.allclose(ob.x_direction, [0.6, 0.8])
    with pytest.raises(ValueError):
        model.Observation(-1.0)
