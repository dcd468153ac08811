"""Markov kernels on the parameter space and their symmetry checks.

Half-line kernels act on ``beta = ||theta||**2``.  The reduced Eaton kernel

    r(beta | alpha) = int q(beta | w) f(w; p, alpha) dw

has no closed form, so densities are computed by marginalising over ``w``
on a fixed composite Gauss-Legendre rule in ``sqrt(w)``, while its moments
use ``E[t_k(Y) / t_0(Y)]`` with ``Y ~ chi2_p(alpha)``.  The weighted kernel
reweights ``r`` by ``beta + alpha + c``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import stats

from .dist import (NcChiSq, _panels_for, binomial_shift, log_g0, ncchisq_logpdf,
                   ncchisq_sample, posterior_central_moments, posterior_raw_moments)
from .model import PriorParams, Properness, ReducedMeasure, log_cp, _check_marginal
from .quadrature import (DEFAULT_QUAD, QuadratureError, QuadratureSpec, gauss_legendre,
                         sqrt_panels, sqrt_window)
from .sampling import InverseCDFTable, TableError, sample_tilted_ncchisq, substream


@dataclass(frozen=True)
class WeightConfig:
    """Offsets of the symmetric weights ``||theta - eta||**2 + d`` and ``2(beta + alpha + c)``."""

    c: float = 1.0
    d: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.d > 0):
            raise ValueError("weights need c > 0 and d > 0")


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """A one-step Markov kernel with a symmetrising measure.

    ``density(to, frm)`` broadcasts; ``sampler(frm, rng)`` takes an array of
    current states (``(n,)`` on the half-line, ``(n, p)`` in ``R^p``) and
    returns next states of the same shape.  ``density_matrix(to, frm)``, when
    given, returns the ``(len(to), len(frm))`` matrix more efficiently.
    ``increment_sampler(rng, shape)`` marks a random walk and lets the
    simulator draw increments in blocks.
    """

    name: str
    density: Callable
    sampler: Callable
    sym_measure_density: Callable
    state_space: str = "half_line"
    p: int = 1
    density_matrix: Callable | None = None
    increment_sampler: Callable | None = None
    window_halfwidth: float = 22.0
    meta: dict = field(default_factory=dict)

    def matrix(self, to, frm):
        to = np.asarray(to, dtype=float)
        frm = np.asarray(frm, dtype=float)
        if self.density_matrix is not None:
            return self.density_matrix(to, frm)
        return self.density(to[:, None], frm[None, :])

    def window(self, frm):
        """Interval of ``sqrt(state)`` holding essentially all mass of ``K(.|frm)``."""
        return sqrt_window(frm, extra_hi=np.sqrt(self.p + 8.0), half_width=self.window_halfwidth)

    def with_measure(self, sym_measure_density, name=None):
        """Same transition law paired with a different measure (for negative controls)."""
        return TransitionKernel(name or self.name + "*", self.density, self.sampler,
                                sym_measure_density, self.state_space, self.p,
                                self.density_matrix, self.increment_sampler,
                                self.window_halfwidth, dict(self.meta))


# ---------------------------------------------------------------------------
# radial priors: g0 possibly multiplied by a bounded perturbation

@dataclass(frozen=True, eq=False)
class RadialPrior:
    """Reduced prior ``c_p exp(log_g(beta)) beta**(p/2 - 1)``."""

    p: int
    log_g: Callable
    properness: Properness = Properness.IMPROPER

    @classmethod
    def from_params(cls, params: PriorParams):
        _check_marginal(params)
        return cls(params.p, lambda z: log_g0(z, params), params.properness)

    def density(self, beta):
        beta = np.asarray(beta, dtype=float)
        with np.errstate(divide="ignore"):
            lp = 0.0 if self.p == 2 else (0.5 * self.p - 1.0) * np.log(beta)
            return np.exp(log_cp(self.p) + self.log_g(beta) + lp)

    def measure(self) -> ReducedMeasure:
        return ReducedMeasure(self.density, self.properness)


class _EatonEngine:
    """Quadrature over ``w`` for reduced Eaton kernel densities.

    Nodes come from a fixed ladder of windows ``[0, sqrt(64 * 4**j) + 22]``
    in ``sqrt(w)``, chosen by the largest state in each query, so a given
    query always sees the same rule regardless of what was computed before.
    """

    WIDTH = 0.5
    ORDER = 12

    def __init__(self, prior: RadialPrior):
        self.prior = prior
        self._lock = threading.Lock()
        self._nodes: dict = {}

    def _tilted01(self, w):
        p = self.prior.p
        t0 = np.empty(w.size)
        t1 = np.empty(w.size)
        for s in range(0, w.size, 512):
            ws = w[s:s + 512]
            x, wt = _panels_for(ws, 1, p)
            base = wt * np.exp(ncchisq_logpdf(x, p, ws[:, None]) + self.prior.log_g(x))
            t0[s:s + 512] = base.sum(axis=1)
            t1[s:s + 512] = (base * x).sum(axis=1)
        return t0, t1

    def nodes(self, smax):
        j = 0
        while 64.0 * 4.0 ** j < smax:
            j += 1
        with self._lock:
            hit = self._nodes.get(j)
        if hit is not None:
            return hit
        v_hi = np.sqrt(64.0 * 4.0 ** j) + 22.0
        x, wt = sqrt_panels(0.0, v_hi, int(np.ceil(v_hi / self.WIDTH)), self.ORDER)
        x, wt = x[0], wt[0]
        t0, t1 = self._tilted01(x)
        entry = (x, wt, wt / t0, t1 / t0)
        with self._lock:
            self._nodes.setdefault(j, entry)
        return entry

    def rtilde(self, beta, alpha):
        """Matrix ``r(beta_i | alpha_j)``."""
        beta = np.atleast_1d(beta)
        alpha = np.atleast_1d(alpha)
        x, _, wt, _ = self.nodes(max(beta.max(initial=0.0), alpha.max(initial=0.0)))
        p = self.prior.p
        with np.errstate(divide="ignore", over="ignore"):
            left = np.exp(self.prior.log_g(beta)[:, None] + ncchisq_logpdf(beta[:, None], p, x[None, :]))
            right = np.exp(ncchisq_logpdf(x[:, None], p, alpha[None, :])) * wt[:, None]
        left = np.where(np.isfinite(left), left, 0.0)
        return left @ right

    def first_moment(self, alpha):
        """``int beta r(beta | alpha) dbeta`` on the same rule as :meth:`rtilde`."""
        alpha = np.atleast_1d(alpha)
        x, wraw, _, h1 = self.nodes(alpha.max(initial=0.0))
        fw = np.exp(ncchisq_logpdf(x[:, None], self.prior.p, alpha[None, :])) * wraw[:, None]
        return fw.T @ h1


@lru_cache(maxsize=64)
def _engine_for(params: PriorParams) -> _EatonEngine:
    return _EatonEngine(RadialPrior.from_params(params))


# ---------------------------------------------------------------------------
# moments of the reduced Eaton kernel through E[t_k(Y)/t_0(Y)]

def _rtilde_central_once(alpha, params, kmax, width):
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    v_lo, v_hi = sqrt_window(alpha, extra_hi=np.sqrt(params.p + 8.0))
    n = int(np.ceil(np.max(v_hi - v_lo) / width))
    y, wy = sqrt_panels(v_lo, v_hi, n, order=12)
    fy = wy * np.exp(ncchisq_logpdf(y, params.p, alpha[:, None]))
    centers = np.repeat(alpha, y.shape[1])
    pc = posterior_central_moments(y.ravel(), centers, params, kmax)
    pc = pc.reshape(alpha.size, y.shape[1], kmax + 1)
    return np.einsum("am,amk->ak", fy, pc)


def rtilde_central_moments(alpha, params: PriorParams, kmax: int = 4,
                           quad: QuadratureSpec = DEFAULT_QUAD):
    """``C_j(alpha) = int (beta - alpha)**j r(beta | alpha) dbeta`` for ``j = 0..kmax``.

    Outer integral over ``Y ~ chi2_p(alpha)`` on sqrt-space panels; the rule
    is halved until successive values agree to ``quad.rel_tol`` on the
    natural scale ``sd**j``.
    """
    _check_marginal(params)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("alpha must be finite and >= 0")
    width = 0.75
    prev = _rtilde_central_once(alpha, params, kmax, width)
    for _ in range(4):
        width *= 0.5
        cur = _rtilde_central_once(alpha, params, kmax, width)
        sd = np.sqrt(np.maximum(cur[:, 2:3], 1.0)) if kmax >= 2 else np.ones((alpha.size, 1))
        scale = np.maximum(np.abs(cur), sd ** np.arange(kmax + 1))
        if np.all(np.abs(cur - prev) <= quad.rel_tol * scale + quad.abs_tol):
            return cur
        prev = cur
    raise QuadratureError("reduced Eaton kernel moments did not converge")


def eaton_R_moment(alpha, k: int, params: PriorParams = PriorParams(),
                   quad: QuadratureSpec = DEFAULT_QUAD):
    """``int beta**k r(beta | alpha) dbeta`` for ``k = 1..4`` (vectorised over ``alpha``)."""
    if k not in (1, 2, 3, 4):
        raise ValueError("k must be in 1..4")
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    raw = binomial_shift(rtilde_central_moments(a, params, k, quad), a)[:, k]
    return float(raw[0]) if np.ndim(alpha) == 0 else raw


def T_normalizer(alpha, params: PriorParams = PriorParams(),
                 weights: WeightConfig = WeightConfig(), quad: QuadratureSpec = DEFAULT_QUAD):
    """``int 2(beta + alpha + c) r(beta | alpha) dbeta = 2 M_1(alpha) + 2 alpha + 2 c``."""
    a = np.asarray(alpha, dtype=float)
    return 2.0 * eaton_R_moment(a, 1, params, quad) + 2.0 * a + 2.0 * weights.c


# ---------------------------------------------------------------------------
# densities

def eaton_R_density(beta, alpha, params: PriorParams = PriorParams()):
    """``r(beta | alpha)`` as a ``(len(beta), len(alpha))`` matrix (scalars give a float)."""
    out = _engine_for(params).rtilde(np.atleast_1d(np.asarray(beta, float)),
                                     np.atleast_1d(np.asarray(alpha, float)))
    return float(out[0, 0]) if np.ndim(beta) == 0 and np.ndim(alpha) == 0 else out


def _norm_on_rule(engine, alpha, c):
    """``M_1(alpha) + alpha + c`` on the engine's own rule, so densities integrate to 1."""
    alpha = np.atleast_1d(alpha)
    return engine.first_moment(alpha) + alpha + c


def _ttilde_matrix(engine, beta, alpha, c):
    beta = np.atleast_1d(beta)
    alpha = np.atleast_1d(alpha)
    r = engine.rtilde(beta, alpha)
    return r * (beta[:, None] + alpha[None, :] + c) / _norm_on_rule(engine, alpha, c)[None, :]


def T_tilde_density(beta, alpha, params: PriorParams = PriorParams(),
                    weights: WeightConfig = WeightConfig(), quad: QuadratureSpec = DEFAULT_QUAD):
    """Weighted kernel density ``(beta + alpha + c) r(beta | alpha) / (M_1(alpha) + alpha + c)``."""
    out = _ttilde_matrix(_engine_for(params), np.atleast_1d(np.asarray(beta, float)),
                         np.atleast_1d(np.asarray(alpha, float)), weights.c)
    return float(out[0, 0]) if np.ndim(beta) == 0 and np.ndim(alpha) == 0 else out


# ---------------------------------------------------------------------------
# samplers

def eaton_R_sample(alpha, params: PriorParams = PriorParams(), rng=None, size=None):
    """Composition draw: ``w ~ chi2_p(alpha)``, then ``beta`` from the posterior given ``w``.

    The posterior step uses the exact Poisson-mixture sampler, so every
    ``w`` gets an exact draw without building a table per ``w``.
    """
    rng = np.random.default_rng() if rng is None else rng
    alpha = np.asarray(alpha, dtype=float)
    shape = alpha.shape if size is None else np.broadcast_shapes(alpha.shape, np.shape(np.empty(size)))
    a = np.broadcast_to(alpha, shape).ravel()
    w = rng.noncentral_chisquare(params.p, np.maximum(a, 1e-300)) if a.size else a
    w = np.where(a == 0, rng.chisquare(params.p, a.size), w)
    out = sample_tilted_ncchisq(w, 0, params, rng).reshape(shape)
    return float(out) if out.ndim == 0 else out


def _size_biased_ncchisq(p, alpha, rng):
    """Draws with density proportional to ``w f(w; p, alpha)``."""
    mu = 0.5 * alpha
    n = rng.poisson(mu)
    shift = rng.random(alpha.shape) * (p + alpha) >= p
    n = n + shift
    return rng.chisquare(p + 2 * n + 2)


def T_tilde_sample_exact(alpha, params: PriorParams = PriorParams(),
                         weights: WeightConfig = WeightConfig(), rng=None):
    """Exact draws from the weighted kernel, vectorised over ``alpha``.

    Proposes ``w`` from a density proportional to ``f(w; alpha)(w + p + alpha + c)``
    and accepts with probability ``(E[beta | w] + alpha + c)/(w + p + alpha + c)``
    (the posterior mean never exceeds ``w + p`` because ``g0`` decreases).
    Given ``w``, ``beta`` comes from the size-biased posterior with probability
    proportional to ``E[beta | w]`` and from the posterior otherwise.
    """
    rng = np.random.default_rng() if rng is None else rng
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    p, c = params.p, weights.c
    w = np.empty(alpha.size)
    h1 = np.empty(alpha.size)
    pending = np.arange(alpha.size)
    while pending.size:
        al = alpha[pending]
        biased = rng.random(pending.size) * (2 * (p + al) + c) < (p + al)
        prop = np.where(biased, _size_biased_ncchisq(p, al, rng),
                        ncchisq_sample_vec(p, al, rng))
        m1 = posterior_raw_moments(prop, params, 1)[:, 1]
        acc = rng.random(pending.size) * (prop + p + al + c) <= m1 + al + c
        w[pending[acc]] = prop[acc]
        h1[pending[acc]] = m1[acc]
        pending = pending[~acc]
    sb = rng.random(alpha.size) * (h1 + alpha + c) < h1
    out = np.empty(alpha.size)
    if np.any(sb):
        out[sb] = sample_tilted_ncchisq(w[sb], 1, params, rng)
    if np.any(~sb):
        out[~sb] = sample_tilted_ncchisq(w[~sb], 0, params, rng)
    return out


def ncchisq_sample_vec(p, lam, rng):
    lam = np.asarray(lam, dtype=float)
    return rng.chisquare(p + 2 * rng.poisson(0.5 * lam))


_TT_LOCK = threading.Lock()


@lru_cache(maxsize=256)
def _ttilde_table(alpha: float, params: PriorParams, c: float):
    engine = _engine_for(params)
    half = 20.0
    for _ in range(4):
        v_lo, v_hi = sqrt_window(alpha, extra_hi=np.sqrt(params.p + 8.0), half_width=half)
        try:
            return InverseCDFTable(lambda b: _ttilde_matrix(engine, b, alpha, c)[:, 0],
                                   float(v_lo) ** 2, float(v_hi) ** 2)
        except TableError:
            half *= 1.5
    raise TableError(f"weighted kernel table at alpha={alpha} could not hold the mass")


def T_tilde_table(alpha: float, params: PriorParams = PriorParams(),
                  weights: WeightConfig = WeightConfig()) -> InverseCDFTable:
    """Inverse-CDF table of the weighted kernel from ``alpha`` (cached, keyed on 12 digits)."""
    key = float(f"{float(alpha):.12g}")
    with _TT_LOCK:
        return _ttilde_table(key, params, weights.c)


def T_tilde_sample(alpha, params: PriorParams = PriorParams(),
                   weights: WeightConfig = WeightConfig(), rng=None, size=None):
    """Draws from the tabulated inverse CDF of the weighted kernel at ``alpha``."""
    rng = np.random.default_rng() if rng is None else rng
    return T_tilde_table(alpha, params, weights).sample(rng, size)


def fullspace_R_sample(eta, rng, size=None):
    """Lebesgue-prior Eaton kernel: ``N(eta, 2 I)``."""
    eta = np.asarray(eta, dtype=float)
    shape = eta.shape if size is None else (size,) + eta.shape
    return eta + np.sqrt(2.0) * rng.standard_normal(shape)


def fullspace_T_increment(p: int, d: float, rng, shape):
    """Increments of the weighted Lebesgue chain; ``shape`` is the leading shape.

    With probability ``d/(2p + d)`` a ``N(0, 2I)`` draw, otherwise radius
    ``sqrt(2 chi2_{p+2})`` along a uniform direction.
    """
    shape = tuple(np.atleast_1d(shape)) if np.ndim(shape) else (int(shape),)
    z = rng.standard_normal(shape + (p,))
    plain = rng.random(shape) < d / (2.0 * p + d)
    radius = np.sqrt(2.0 * rng.chisquare(p + 2, shape))
    norm = np.linalg.norm(z, axis=-1)
    scale = np.where(plain, np.sqrt(2.0), radius / np.where(norm > 0, norm, 1.0))
    return z * scale[..., None]


def fullspace_T_sample(eta, d: float, rng, size=None):
    """One step of the weighted chain ``(||theta - eta||**2 + d)/(2p + d) N(theta; eta, 2I)``."""
    if not d > 0:
        raise ValueError("d must be positive")
    eta = np.asarray(eta, dtype=float)
    p = eta.shape[-1]
    lead = eta.shape[:-1] if size is None else (size,) + eta.shape[:-1]
    return eta + fullspace_T_increment(p, d, rng, lead)


def fullspace_normalizer_mc(p: int, d: float, n: int, seed: int, key: int = 0, chunk: int = 100_000):
    """Monte Carlo of ``E[||theta - eta||**2 + d]`` under ``theta ~ N(eta, 2I)``; exact value ``2p + d``.

    Draws come in chunks, chunk ``j`` from ``substream(seed, key, j)``.
    Returns ``(mean, standard error)``.
    """
    total, total_sq, count = 0.0, 0.0, 0
    for j in range(-(-n // chunk)):
        m = min(chunk, n - j * chunk)
        inc = np.sqrt(2.0) * substream(seed, key, j).standard_normal((m, p))
        v = np.sum(inc * inc, axis=1) + d
        total += v.sum()
        total_sq += (v * v).sum()
        count += m
    mean = total / count
    return mean, float(np.sqrt(max(total_sq / count - mean * mean, 0.0) / count))


# ---------------------------------------------------------------------------
# kernel constructors

def reduced_eaton_kernel(params: PriorParams = PriorParams(), prior: RadialPrior | None = None):
    """``r`` with its symmetrising measure, the reduced prior.

    ``prior`` overrides the radial prior (e.g. a bounded perturbation); the
    kernel is then the Eaton kernel of that prior.
    """
    perturbed = prior is not None
    if prior is None:
        prior = RadialPrior.from_params(params)
        engine = _engine_for(params)
    else:
        engine = _EatonEngine(prior)

    def density(to, frm):
        to, frm = np.broadcast_arrays(np.asarray(to, float), np.asarray(frm, float))
        flat = [engine.rtilde(np.array([t]), np.array([f]))[0, 0] for t, f in zip(to.ravel(), frm.ravel())]
        return np.reshape(flat, to.shape)

    def sampler(frm, rng):
        if perturbed:
            raise NotImplementedError("sampling is only available for the unperturbed prior")
        return eaton_R_sample(np.asarray(frm, float), params, rng)

    return TransitionKernel("eaton_R", density, sampler, prior.density, "half_line", prior.p,
                            density_matrix=engine.rtilde, meta={"params": params, "perturbed": perturbed})


def weighted_eaton_kernel(params: PriorParams = PriorParams(),
                          weights: WeightConfig = WeightConfig(), prior: RadialPrior | None = None):
    """The weighted kernel with its symmetrising measure ``(M_1 + alpha + c) nu``.

    The constant factor 2 of the normaliser is dropped from the measure;
    symmetry is unaffected by constant multiples.
    """
    perturbed = prior is not None
    if prior is None:
        prior = RadialPrior.from_params(params)
        engine = _engine_for(params)
    else:
        engine = _EatonEngine(prior)
    c = weights.c

    def matrix(to, frm):
        return _ttilde_matrix(engine, to, frm, c)

    def density(to, frm):
        to, frm = np.broadcast_arrays(np.asarray(to, float), np.asarray(frm, float))
        flat = [matrix(np.array([t]), np.array([f]))[0, 0] for t, f in zip(to.ravel(), frm.ravel())]
        return np.reshape(flat, to.shape)

    def measure(alpha):
        alpha = np.asarray(alpha, dtype=float)
        out = _norm_on_rule(engine, alpha.ravel(), c) * prior.density(alpha.ravel())
        return out.reshape(alpha.shape)

    def sampler(frm, rng):
        if perturbed:
            raise NotImplementedError("sampling is only available for the unperturbed prior")
        return T_tilde_sample_exact(np.asarray(frm, float), params, weights, rng)

    return TransitionKernel("eaton_T", density, sampler, measure, "half_line", prior.p,
                            density_matrix=matrix,
                            meta={"params": params, "weights": weights, "weighted_eaton": not perturbed,
                                  "perturbed": perturbed})


def lebesgue_image_kernel(p: int, d: float = 1.0):
    """Image of the weighted Lebesgue-prior chain under ``theta -> ||theta||**2``.

    ``k(beta | alpha) = [beta + alpha + d - 2 sqrt(alpha beta) A_p(sqrt(alpha beta)/2)]
    / (2p + d) * f(beta/2; p, alpha/2) / 2``, where ``A_p = I_{p/2}/I_{p/2-1}``
    is the mean resultant length of the direction of ``theta`` given its
    norm.  Symmetric with respect to ``c_p beta**(p/2 - 1)``, the image of
    Lebesgue measure.
    """
    from .dist import bessel_ratio

    def density(to, frm):
        to = np.asarray(to, dtype=float)
        frm = np.asarray(frm, dtype=float)
        s = np.sqrt(to * frm)
        cross = 2.0 * s * bessel_ratio(0.5 * p, 0.5 * s) if p > 0 else 0.0
        with np.errstate(divide="ignore", over="ignore"):
            base = 0.5 * np.exp(ncchisq_logpdf(0.5 * to, p, 0.5 * frm))
        out = (to + frm + d - cross) / (2.0 * p + d) * base
        return np.where(np.isfinite(out), np.maximum(out, 0.0), 0.0)

    def sampler(frm, rng):
        frm = np.asarray(frm, dtype=float)
        eta = np.zeros(frm.shape + (p,))
        eta[..., 0] = np.sqrt(frm)
        theta = fullspace_T_sample(eta, d, rng)
        return np.sum(theta * theta, axis=-1)

    def measure(beta):
        return RadialPrior(p, lambda z: np.zeros_like(np.asarray(z, float))).density(beta)

    return TransitionKernel(f"lebesgue_image_p{p}", density, sampler, measure, "half_line", p,
                            meta={"d": d})


def fullspace_T_kernel(p: int, d: float = 1.0):
    """The weighted Lebesgue-prior chain on ``R^p`` (a symmetric random walk)."""
    norm_const = (4.0 * np.pi) ** (-0.5 * p)

    def density(to, frm):
        diff = np.asarray(to, float) - np.asarray(frm, float)
        r2 = np.sum(diff * diff, axis=-1)
        return (r2 + d) / (2.0 * p + d) * norm_const * np.exp(-0.25 * r2)

    def sampler(frm, rng):
        frm = np.asarray(frm, dtype=float)
        return frm + fullspace_T_increment(p, d, rng, frm.shape[:-1])

    return TransitionKernel(f"lebesgue_T_p{p}", density, sampler,
                            lambda x: np.ones(np.shape(x)[:-1]), "euclidean", p,
                            increment_sampler=lambda rng, shape: fullspace_T_increment(p, d, rng, shape))


# ---------------------------------------------------------------------------
# checks

def _sqrt_rule(lo, hi, n_panels, order=8):
    x, w = sqrt_panels(np.sqrt(lo), np.sqrt(hi), n_panels, order)
    return x[0], w[0]


def _flux(kernel, A, B, n_panels):
    """``int_A xi(alpha) K(B | alpha) dalpha`` on product sqrt-space rules."""
    xa, wa = _sqrt_rule(A[0], A[1], n_panels)
    xb, wb = _sqrt_rule(B[0], B[1], n_panels)
    mat = kernel.matrix(xb, xa)
    return float(wa * kernel.sym_measure_density(xa) @ (wb @ mat))


@dataclass
class BalanceReport:
    max_asymmetry: float
    pairs: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def detailed_balance_check(kernel: TransitionKernel, rectangles,
                           quad: QuadratureSpec = DEFAULT_QUAD, floor: float = 1e-300,
                           report: bool = False):
    """Largest relative asymmetry ``|w(A,B) - w(B,A)| / max(w(A,B), w(B,A), floor)``.

    ``w(A, B) = int_A xi(d alpha) K(B | alpha)``.  ``rectangles`` is a list of
    interval pairs ``((a0, a1), (b0, b1))``.  Each flux is refined by doubling
    the panel count until it settles to ``quad.rel_tol``; a pair whose
    quadrature does not settle is recorded in the report and skipped.
    """
    worst = 0.0
    rep = BalanceReport(0.0)
    for A, B in rectangles:
        try:
            vals = []
            for X, Y in ((A, B), (B, A)):
                n, prev = 2, _flux(kernel, X, Y, 2)
                while True:
                    n *= 2
                    cur = _flux(kernel, X, Y, n)
                    if abs(cur - prev) <= quad.rel_tol * abs(cur) + max(quad.abs_tol, floor):
                        break
                    if n >= 256:
                        raise QuadratureError(f"flux {X}->{Y} unsettled ({prev:.6e} vs {cur:.6e})")
                    prev = cur
                vals.append(cur)
        except QuadratureError as exc:
            rep.failures.append((A, B, str(exc)))
            continue
        asym = abs(vals[0] - vals[1]) / max(vals[0], vals[1], floor)
        rep.pairs.append((A, B, vals[0], vals[1], asym))
        worst = max(worst, asym)
    rep.max_asymmetry = worst
    return rep if report else worst


def partition_rectangles(lo: float, hi: float, n: int):
    """All ``n*n`` pairs of cells of an equal partition of ``[lo, hi]``."""
    edges = np.linspace(lo, hi, n + 1)
    cells = list(zip(edges[:-1], edges[1:]))
    return [(A, B) for A in cells for B in cells]


def phi_membership_check(phi, f, M: float, pairs):
    """Check ``||phi(theta) - phi(eta)||**2 <= M f(theta, eta)`` on probe pairs.

    Returns ``(holds, worst_ratio)`` with the ratio taken against ``M f``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one pair")
    worst = 0.0
    for theta, eta in pairs:
        diff = np.atleast_1d(np.asarray(phi(theta), float) - np.asarray(phi(eta), float))
        worst = max(worst, float(diff @ diff) / (M * float(f(theta, eta))))
    return worst <= 1.0, worst


def squared_distance_weight(d: float):
    def f(theta, eta):
        diff = np.atleast_1d(np.asarray(theta, float) - np.asarray(eta, float))
        return float(diff @ diff) + d
    return f


def bounded_perturbation(base: ReducedMeasure, u, cbound: float, probe=None) -> ReducedMeasure:
    """Measure with density ``u * base.density`` after checking ``1/cbound < u < cbound``."""
    if not cbound > 1:
        raise ValueError("cbound must exceed 1")
    probe = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 2001)]) if probe is None else np.asarray(probe, float)
    vals = np.asarray(u(probe), dtype=float)
    bad = ~((vals > 1.0 / cbound) & (vals < cbound))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"u({probe[i]:.6g}) = {vals[i]:.6g} outside (1/{cbound}, {cbound})")
    return ReducedMeasure(lambda b: u(b) * base.density(b), base.properness_flag)


def perturbed_prior(params: PriorParams, u, cbound: float, probe=None) -> RadialPrior:
    """Radial prior ``u * g0`` for a verified bounded perturbation ``u`` of ``beta``."""
    bounded_perturbation(RadialPrior.from_params(params).measure(), u, cbound, probe)
    with np.errstate(divide="ignore"):
        return RadialPrior(params.p, lambda z: log_g0(z, params) + np.log(u(z)), params.properness)


@dataclass
class AssumptionReport:
    passed: bool
    lower_bound: float
    normalizer: list
    compact_integrals: list
    violations: list


def assumption_T_check(params: PriorParams = PriorParams(), weights: WeightConfig = WeightConfig(),
                       grid=None, compacts=None, quad: QuadratureSpec = DEFAULT_QUAD):
    """Check ``0 < T(alpha) < inf`` on a grid and ``int_K T dnu < inf`` on compacts."""
    grid = np.geomspace(1e-3, 1e4, 25) if grid is None else np.asarray(grid, float)
    compacts = [(0.0, float(n)) for n in (1, 10, 100)] if compacts is None else compacts
    violations = []
    tn = np.atleast_1d(T_normalizer(grid, params, weights, quad))
    for a, t in zip(grid, tn):
        if not (np.isfinite(t) and t > 0):
            violations.append(f"normaliser at alpha={a:.6g} is {t}")
    prior = RadialPrior.from_params(params)
    engine = _engine_for(params)
    integrals = []
    for lo, hi in compacts:
        # the normaliser at many nodes: first moment on the w-marginal rule
        x, w = sqrt_panels(np.sqrt(lo), np.sqrt(hi), 16, order=12)
        x, w = x[0], w[0]
        tx = 2.0 * (engine.first_moment(x) + x + weights.c)
        val = float(np.sum(w * tx * prior.density(x)))
        integrals.append(((lo, hi), val))
        if not np.isfinite(val):
            violations.append(f"integral over [{lo}, {hi}] is not finite")
    lb = float(np.min(tn))
    if lb < weights.c:
        violations.append(f"normaliser lower bound {lb} below c={weights.c}")
    return AssumptionReport(not violations, lb, list(zip(grid.tolist(), tn.tolist())),
                            integrals, violations)


__all__ = [
    "WeightConfig", "TransitionKernel", "RadialPrior", "QuadratureSpec", "eaton_R_density",
    "eaton_R_sample", "eaton_R_moment", "rtilde_central_moments", "T_normalizer",
    "T_tilde_density", "T_tilde_sample", "T_tilde_sample_exact", "T_tilde_table",
    "fullspace_R_sample", "fullspace_T_sample", "fullspace_T_increment", "fullspace_normalizer_mc",
    "reduced_eaton_kernel", "weighted_eaton_kernel", "lebesgue_image_kernel",
    "fullspace_T_kernel", "detailed_balance_check", "partition_rectangles",
    "phi_membership_check", "squared_distance_weight", "bounded_perturbation",
    "perturbed_prior", "assumption_T_check", "BalanceReport", "AssumptionReport",
]
