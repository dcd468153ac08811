import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from eaton_lab.dist import (NcChiSq, SeriesError, SeriesSpec, bessel_ratio, ncchisq_moment,
                            ncchisq_pdf, ncchisq_pdf_series, ncchisq_sample, tk_direct, tk_value,
                            wk_value)
from eaton_lab.model import PriorParams
from eaton_lab.quadrature import sqrt_panels

# independent oracles: scipy.stats.ncx2 and 30-digit mpmath quadrature, frozen here
NCX2_3_7_AT_5 = 0.06932371162120882


def test_types_validate():
    with pytest.raises(ValueError):
        NcChiSq(0, 1.0)
    with pytest.raises(ValueError):
        NcChiSq(3, -1.0)
    with pytest.raises(ValueError):
        SeriesSpec(rel_tol=0)


def test_central_reduction():
    assert ncchisq_pdf(3.0, NcChiSq(3, 0.0)) == pytest.approx(stats.chi2.pdf(3.0, 3), rel=1e-13)


def test_bessel_vs_series_vs_scipy():
    d = NcChiSq(3, 7.0)
    a, b = ncchisq_pdf(5.0, d), ncchisq_pdf_series(5.0, d)
    assert abs(a - b) <= 1e-10 * b
    assert a == pytest.approx(NCX2_3_7_AT_5, rel=1e-12)


def test_pdf_rejects_bad_input():
    with pytest.raises(ValueError):
        ncchisq_pdf(np.nan, NcChiSq(3, 1.0))
    with pytest.raises(ValueError):
        ncchisq_pdf(-1.0, NcChiSq(3, 1.0))


@pytest.mark.parametrize("p,lam", [(1, 0.0), (1, 4.0), (2, 30.0), (3, 7.0), (5, 500.0)])
def test_pdf_normalised_and_moments(p, lam):
    d = NcChiSq(p, lam)
    c = np.sqrt(lam)
    x, w = sqrt_panels(max(c - 20, 0), c + 25, 120, order=12)
    dens = ncchisq_pdf(x[0], d)
    assert abs(w[0] @ dens - 1) < 1e-9
    for k in range(1, 5):
        assert w[0] @ (dens * x[0] ** k) == pytest.approx(ncchisq_moment(d, k), rel=1e-7)


def test_moment_range():
    with pytest.raises(ValueError):
        ncchisq_moment(NcChiSq(3, 1.0), 5)


def test_moment_expansions():
    p = 3
    for lam in (1e4, 1e5):
        d = NcChiSq(p, lam)
        r3 = (ncchisq_moment(d, 3) - lam ** 3) / lam ** 2
        r4 = (ncchisq_moment(d, 4) - lam ** 4 - (24 + 4 * p) * lam ** 3) / lam ** 2
        assert abs(r3) < 100 and abs(r4) < 1000


def test_sampler_moments(rng):
    s = ncchisq_sample(NcChiSq(3, 100.0), rng, 10 ** 6)
    assert abs(s.mean() - 103) < 4 * s.std() / 1e3
    assert s.var() == pytest.approx(406, rel=0.02)


def test_sampler_central_ks(rng):
    s = ncchisq_sample(NcChiSq(4, 0.0), rng, 10 ** 5)
    assert stats.kstest(s, stats.chi2(4).cdf).pvalue > 1e-3


def test_wk_gamma_identity_when_g0_flat():
    flat = PriorParams(3, a=1.0, b=0.0)
    from scipy.special import gammaln
    for k, n in [(0, 0), (1, 0), (2, 5), (3, 40)]:
        expect = np.exp(gammaln(n + 1.5 + k) - gammaln(n + 1.5))
        assert wk_value(k, n, flat) == pytest.approx(expect, rel=1e-10)


def test_wk_matches_direct_expectation(params):
    f = lambda u: (1 + u) ** -1.5 * stats.chi2.pdf(u, 3)
    oracle = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
    assert wk_value(0, 0, params) == pytest.approx(oracle, abs=1e-8)


def test_wk_requires_positive_a():
    with pytest.raises(ValueError):
        wk_value(0, 0, PriorParams(3, a=0.0, b=1.0))


@pytest.mark.parametrize("y", [1.0, 10.0, 100.0])
@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_tk_series_vs_quadrature(params, k, y):
    f = lambda u: (1 + u) ** -1.5 * u ** k * stats.ncx2.pdf(u, 3, y)
    oracle = integrate.quad(f, 0, np.inf, points=None, epsabs=0, epsrel=1e-11, limit=400)[0]
    assert tk_value(k, y, params) == pytest.approx(oracle, rel=1e-6)
    assert tk_direct(k, y, params) == pytest.approx(oracle, rel=1e-6)


def test_tk_degenerate_y0(params):
    f = lambda u: (1 + u) ** -1.5 * stats.chi2.pdf(u, 3)
    oracle = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12)[0]
    assert tk_value(0, 0.0, params) == pytest.approx(oracle, rel=1e-9)


def test_tk_series_limit():
    with pytest.raises(SeriesError):
        tk_value(0, 1e4, PriorParams(), SeriesSpec(max_terms=5))


def test_ratio_identity_residual_bounded(params):
    ys = np.geomspace(10, 1e4, 8)
    for k in (1, 2, 3, 4):
        res = np.array([tk_value(k, y, params) / tk_value(k - 1, y, params) / 2
                        - (y / 2 + 2 * (k - 1) - 1.5) for y in ys])
        scaled = np.abs(res * ys)
        assert scaled.max() <= 2 * scaled[0] + 1e-6


def test_bessel_ratio_basics():
    assert bessel_ratio(1.5, 0.0) == 0.0
    grid = np.arange(0, 100.5, 0.5)
    r = bessel_ratio(1.5, grid)
    assert np.all(np.diff(r) > 0) and np.all(r < 1)
    for order in (0.5, 1.5, 3.0):
        kap = 1e4
        assert bessel_ratio(order, kap) == pytest.approx(1 - (order - 0.5) / kap, abs=2e-8)
    assert bessel_ratio(1.5, 1e6) < 1
    with pytest.raises(ValueError):
        bessel_ratio(0.2, 1.0)


def test_bessel_ratio_small_argument_high_order():
    # I_nu(x)/I_{nu-1}(x) ~ x/(2 nu) for small x
    assert bessel_ratio(60.5, 1e-5) == pytest.approx(1e-5 / 121, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 20.0), st.floats(0.0, 500.0))
def test_bessel_ratio_recurrence(order, kappa):
    # r_nu = 1 / (2 nu / x + r_{nu+1})
    if kappa < 1e-3:
        return
    lhs = bessel_ratio(order, kappa)
    rhs = 1.0 / (2 * order / kappa + bessel_ratio(order + 1, kappa))
    assert lhs == pytest.approx(rhs, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(0.0, 200.0), st.floats(0.01, 400.0))
def test_bessel_and_series_agree(p, lam, w):
    d = NcChiSq(p, lam)
    a, b = ncchisq_pdf(w, d), ncchisq_pdf_series(w, d)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-300)
