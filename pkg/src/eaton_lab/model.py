"""The reduced normal-means model.

With ``X ~ N(theta, I_p)`` and a prior whose density in ``theta`` is
``(a + ||theta||**2)**(-b)``, everything depends on ``w = ||x||**2`` and
``beta = ||theta||**2``:

* ``w | beta ~ chi2_p(beta)``;
* the reduced prior on ``beta`` has density ``c_p (a + beta)**(-b) beta**(p/2 - 1)``
  with ``c_p = pi**(p/2) / Gamma(p/2)``;
* the reduced posterior is ``q(beta | w) = g0(beta) f(beta; p, w) / t_0(w)``,
  using the symmetry ``f(w; p, beta) beta**(p/2-1) = f(beta; p, w) w**(p/2-1)``
  of the noncentral chi-square density.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .dist import (NcChiSq, bessel_ratio, log_g0, ncchisq_logpdf, ncchisq_pdf)
from .quadrature import DEFAULT_QUAD, QuadratureSpec, integrate_halfline
from .sampling import InverseCDFTable, TableError


class MarginalDivergenceError(ValueError):
    """The marginal of ``w`` is not sigma-finite for the requested prior."""


class Properness(str, Enum):
    PROPER = "proper"
    IMPROPER = "improper"


@dataclass(frozen=True)
class PriorParams:
    """Prior ``(a + ||theta||**2)**(-b)`` on ``R^p``; ``b`` defaults to ``p/2``.

    ``a = 0`` gives a homogeneous prior; it only has a sigma-finite marginal
    when ``b < p/2``, and :func:`marginal` enforces that.
    """

    p: int = 3
    a: float = 1.0
    b: float | None = None

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        object.__setattr__(self, "p", int(self.p))
        if self.b is None:
            object.__setattr__(self, "b", 0.5 * self.p)
        for name in ("a", "b"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def properness(self) -> Properness:
        if self.a > 0 and self.b > 0.5 * self.p:
            return Properness.PROPER
        return Properness.IMPROPER

    @property
    def sigma_finite_marginal(self) -> bool:
        return self.a > 0 or self.b < 0.5 * self.p


@dataclass(frozen=True)
class ReducedMeasure:
    """A measure on ``[0, inf)`` given by its Lebesgue density."""

    density: Callable = field(compare=False)
    properness_flag: Properness = Properness.IMPROPER

    def __call__(self, beta):
        return self.density(beta)

    def mass(self, upper: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
        """``int_0^upper density``; finite for every finite ``upper`` when sigma-finite."""
        from .quadrature import tanh_sinh
        return float(tanh_sinh(lambda x, rows: self.density(x), 0.0, upper, quad)[0])


@dataclass(frozen=True)
class Observation:
    w: float
    x_direction: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.w) or self.w < 0:
            raise ValueError("w must be finite and >= 0")
        if self.x_direction is not None:
            u = np.asarray(self.x_direction, dtype=float)
            if abs(np.linalg.norm(u) - 1.0) > 1e-12:
                raise ValueError("x_direction must be a unit vector")

    @classmethod
    def from_x(cls, x):
        x = np.asarray(x, dtype=float)
        w = float(x @ x)
        return cls(w, x / np.sqrt(w) if w > 0 else None)


def log_cp(p: int) -> float:
    """log of ``pi**(p/2) / Gamma(p/2)``, the surface factor of the radial map."""
    return 0.5 * p * np.log(np.pi) - special.gammaln(0.5 * p)


def reduced_prior_density(beta, params: PriorParams):
    """Density of the image of the prior under ``theta -> ||theta||**2``.

    At ``beta = 0`` with ``p = 1`` the value is ``+inf`` (integrable).
    """
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise ValueError("beta must be >= 0")
    with np.errstate(divide="ignore"):
        if params.p == 2:
            logpow = np.zeros_like(beta)
        else:
            logpow = (0.5 * params.p - 1.0) * np.log(beta)
        out = np.exp(log_cp(params.p) + log_g0(beta, params) + logpow)
    return float(out) if out.ndim == 0 else out


def reduced_prior(params: PriorParams) -> ReducedMeasure:
    return ReducedMeasure(lambda b: reduced_prior_density(b, params), params.properness)


def reduced_likelihood(w, beta, p: int):
    """Density of ``w = ||x||**2`` given ``beta``: ``chi2_p(beta)``."""
    return ncchisq_pdf(w, NcChiSq(p, float(beta)))


def _check_marginal(params):
    if not params.sigma_finite_marginal:
        raise MarginalDivergenceError(
            f"a = 0 with b = {params.b} >= p/2 = {params.p / 2}: the marginal "
            "integral diverges at beta -> 0; a sigma-finite marginal needs b < p/2")


def _spread(w, p):
    return np.sqrt(2.0 * p + 4.0 * np.asarray(w, dtype=float)) + 1.0


def marginal(w: float, params: PriorParams, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Marginal density of ``w``: ``int f(w; p, beta) nu(beta) dbeta``.

    Computed by direct quadrature over ``beta``.  At ``w = 0`` the value is
    the limit (``0`` for ``p >= 3``, ``+inf`` for ``p = 1``).
    """
    _check_marginal(params)
    if not np.isfinite(w) or w < 0:
        raise ValueError("w must be finite and >= 0")
    if w == 0:
        return float(np.exp(log_cp(params.p)) * _t0(0.0, params, quad)) if params.p == 2 else (
            0.0 if params.p > 2 else np.inf)
    lcp = log_cp(params.p)

    def f(beta, rows):
        with np.errstate(divide="ignore"):
            lpow = 0.0 if params.p == 2 else (0.5 * params.p - 1.0) * np.log(beta)
        return np.exp(ncchisq_logpdf(w, params.p, beta) + lcp + log_g0(beta, params) + lpow)

    return float(integrate_halfline(f, max(w - params.p, 0.0), _spread(w, params.p), quad)[0])


@lru_cache(maxsize=4096)
def _t0(w: float, params: PriorParams, quad: QuadratureSpec) -> float:
    """``t_0(w) = int g0(beta) f(beta; p, w) dbeta`` by adaptive quadrature."""
    def f(beta, rows):
        return np.exp(log_g0(beta, params) + ncchisq_logpdf(beta, params.p, w))
    return float(integrate_halfline(f, w + params.p, _spread(w, params.p), quad)[0])


def _log_posterior(beta, w, params, quad):
    return (log_g0(beta, params) + ncchisq_logpdf(beta, params.p, w)
            - np.log(_t0(float(w), params, quad)))


def posterior_density(beta, w: float, params: PriorParams,
                      quad: QuadratureSpec = DEFAULT_QUAD):
    """Formal posterior density of ``beta`` given ``w``."""
    _check_marginal(params)
    beta = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(_log_posterior(beta, float(w), params, quad))
    return float(out) if out.ndim == 0 else out


def posterior_moment(w: float, k: int, params: PriorParams,
                     quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``E[beta**k | w]`` under the formal posterior, by adaptive quadrature."""
    if k not in (0, 1, 2, 3, 4):
        raise ValueError("k must be in 0..4")
    _check_marginal(params)
    w = float(w)
    lt0 = np.log(_t0(w, params, quad))

    def f(beta, rows):
        with np.errstate(divide="ignore"):
            return np.exp(log_g0(beta, params) + ncchisq_logpdf(beta, params.p, w) - lt0) * beta ** k

    return float(integrate_halfline(f, w + params.p, _spread(w, params.p), quad)[0])


# ---------------------------------------------------------------------------
# posterior sampling by cached inverse-CDF tables

_TABLE_LOCK = threading.Lock()


@lru_cache(maxsize=512)
def _posterior_table_cached(w: float, params: PriorParams, quad: QuadratureSpec):
    m1 = posterior_moment(w, 1, params, quad)
    m2 = posterior_moment(w, 2, params, quad)
    sd = np.sqrt(max(m2 - m1 * m1, 0.0))
    # mode on a coarse sqrt-grid; the table only needs it to place its window
    v = np.linspace(0.0, np.sqrt(m1 + 15.0 * sd + 1.0), 2001)
    with np.errstate(divide="ignore"):
        lp = _log_posterior(v * v, w, params, quad)
    mode = float(v[np.argmax(lp)] ** 2)
    dens = lambda x: posterior_density(x, w, params, quad)
    half = 12.0 * sd
    for _ in range(6):
        try:
            return InverseCDFTable(dens, max(0.0, mode - half), mode + half)
        except TableError:
            # exponential tails can outrun 12 sd when sd is small; widen and retry
            half *= 1.5
    return InverseCDFTable(dens, max(0.0, mode - half), mode + half)


def posterior_table(w: float, params: PriorParams,
                    quad: QuadratureSpec = DEFAULT_QUAD) -> InverseCDFTable:
    """4096-point inverse-CDF table of the posterior, cached per ``(w, params)``."""
    _check_marginal(params)
    with _TABLE_LOCK:
        return _posterior_table_cached(float(w), params, quad)


def posterior_sample(w: float, params: PriorParams, rng: np.random.Generator,
                     size=None, quad: QuadratureSpec = DEFAULT_QUAD):
    """Draw ``beta`` from the formal posterior given ``w`` via its inverse-CDF table.

    Raises :class:`~eaton_lab.sampling.TableError` if the table window
    cannot hold the posterior mass.
    """
    return posterior_table(w, params, quad).sample(rng, size)


def sphere_sample(beta: float, p: int, rng: np.random.Generator, size=None):
    """Uniform point(s) on the sphere of radius ``sqrt(beta)`` in ``R^p``."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    shape = (p,) if size is None else (size, p)
    z = rng.standard_normal(shape)
    if beta == 0:
        return np.zeros(shape)
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    return np.sqrt(beta) * z


# ---------------------------------------------------------------------------
# full-space posterior mean

def shrinkage_radius(r, params: PriorParams, quad: QuadratureSpec = DEFAULT_QUAD):
    """Length of the posterior mean of ``theta`` when ``||x|| = r`` (vectorised).

    Given ``beta``, the posterior on the sphere of radius ``sqrt(beta)`` is
    tilted by ``exp(x . theta)``, a von Mises-Fisher law whose mean has
    length ``sqrt(beta) A_p(sqrt(beta) r)`` with ``A_p = I_{p/2}/I_{p/2-1}``.
    Averaging over the reduced posterior gives the radius.
    """
    _check_marginal(params)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    idx = np.flatnonzero(r > 0)
    if idx.size == 0:
        return out
    rr = r[idx]
    w = rr * rr
    wc = w[:, None]
    rc = rr[:, None]
    half_p = 0.5 * params.p

    def base(beta, rows):
        return np.exp(log_g0(beta, params) + ncchisq_logpdf(beta, params.p, wc[rows]))

    def num(beta, rows):
        s = np.sqrt(beta)
        return base(beta, rows) * s * bessel_ratio(half_p, s * rc[rows])

    center, scale = w + params.p, _spread(w, params.p)
    out[idx] = integrate_halfline(num, center, scale, quad) / integrate_halfline(
        base, center, scale, quad)
    return out


def posterior_mean_fullspace(x, params: PriorParams, quad: QuadratureSpec = DEFAULT_QUAD):
    """Formal Bayes estimate of ``theta`` (squared-error loss) at ``x``.

    Accepts a single point of shape ``(p,)`` or a batch ``(n, p)``.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    rad = shrinkage_radius(r, params, quad)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0, rad / np.where(r > 0, r, 1.0), 0.0)
    return x * (scale[..., None] if x.ndim > 1 else float(scale[0]))


# ---------------------------------------------------------------------------
# estimators and risk

def mle(x):
    return np.asarray(x, dtype=float)


def james_stein(x):
    x = np.asarray(x, dtype=float)
    p = x.shape[-1]
    w = np.sum(x * x, axis=-1, keepdims=True)
    return (1.0 - (p - 2) / w) * x


class FormalBayesEstimator:
    """Callable wrapper of :func:`posterior_mean_fullspace` for risk studies."""

    def __init__(self, params: PriorParams, quad: QuadratureSpec = DEFAULT_QUAD):
        self.params, self.quad = params, quad

    def __call__(self, x):
        return posterior_mean_fullspace(x, self.params, self.quad)


ESTIMATORS = {"mle": lambda params: mle, "james_stein": lambda params: james_stein,
              "formal_bayes": FormalBayesEstimator}


def mc_risk(estimator, theta, n_rep: int, rng: np.random.Generator):
    """Monte Carlo quadratic risk ``E||delta(X) - theta||**2`` and its standard error.

    ``estimator`` maps an ``(n, p)`` array of observations to estimates.
    """
    if n_rep < 100:
        raise ValueError("n_rep must be >= 100")
    theta = np.asarray(theta, dtype=float)
    x = theta + rng.standard_normal((n_rep, theta.size))
    loss = np.sum((estimator(x) - theta) ** 2, axis=1)
    return float(loss.mean()), float(loss.std(ddof=1) / np.sqrt(n_rep))


__all__ = [
    "MarginalDivergenceError", "Properness", "PriorParams", "ReducedMeasure", "Observation",
    "reduced_prior_density", "reduced_prior", "reduced_likelihood", "marginal",
    "posterior_density", "posterior_moment", "posterior_table", "posterior_sample",
    "sphere_sample", "shrinkage_radius", "posterior_mean_fullspace", "mle", "james_stein",
    "FormalBayesEstimator", "ESTIMATORS", "mc_risk", "TableError",
]
