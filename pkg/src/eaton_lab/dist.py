"""Noncentral chi-square machinery for the reduced normal-means model.

Everything downstream works with ``w = ||x||**2`` and ``beta = ||theta||**2``,
whose laws are noncentral chi-square.  Besides the density and its sampler
this module provides the tilted integrals

    t_k(y) = E[g0(U) U**k],   U ~ chi2_p(y),   g0(z) = (a + z)**(-b),

both through their Poisson-mixture series (``tk_value``) and through direct
quadrature (``tk_direct``).  The two routes share no code beyond the density.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import special, stats

from .quadrature import QuadratureSpec, integrate_halfline, sqrt_panels

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class NcChiSq:
    """Noncentral chi-square law with ``p`` degrees of freedom."""

    p: int
    lam: float = 0.0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"noncentrality must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True)
class SeriesSpec:
    """Truncation control for Poisson-mixture sums."""

    rel_tol: float = 1e-13
    max_terms: int = 200_000

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


class SeriesError(RuntimeError):
    """A Poisson-mixture series failed to converge within ``max_terms``."""


def _central_logpdf(w, p):
    nu = 0.5 * p
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (nu - 1.0) * np.log(w) - 0.5 * w - nu * LOG2 - special.gammaln(nu)
    if p == 2:
        out = np.where(w == 0, -LOG2, out)
    return out


def _log_bessel_i(nu, z):
    """log I_nu(z) for z > 0, falling back to the small-argument limit on underflow."""
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        ive = special.ive(nu, z)
        out = np.log(ive) + z
    small = ~(ive > 1e-290)
    if np.any(small):
        zs = np.broadcast_to(z, out.shape)[small]
        approx = nu * (np.log(zs) - LOG2) - special.gammaln(nu + 1.0)
        out = np.where(small, 0.0, out)
        out[small] = approx
    return out


def ncchisq_logpdf(w, p, lam):
    """Log density of chi2_p(lam) at ``w`` (Bessel form), vectorised.

    ``w`` and ``lam`` broadcast.  Exact zeros of ``w`` or ``lam`` take the
    appropriate limiting forms, so the result is ``-inf``/``+inf`` rather than
    ``nan`` at the origin.
    """
    w = np.asarray(w, dtype=float)
    lam = np.asarray(lam, dtype=float)
    w, lam = np.broadcast_arrays(w, lam)
    nu = 0.5 * p - 1.0
    out = np.empty(w.shape)
    central = (lam == 0) | (w == 0)
    if np.any(central):
        out[central] = _central_logpdf(w[central], p) - 0.5 * lam[central]
    gen = ~central
    if np.any(gen):
        ww, ll = w[gen], lam[gen]
        z = np.sqrt(ww * ll)
        out[gen] = (-LOG2 - 0.5 * (ww + ll) + 0.5 * nu * (np.log(ww) - np.log(ll))
                    + _log_bessel_i(nu, z))
    return out


def _check_finite(*vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite input")


def ncchisq_pdf(w, dist: NcChiSq):
    """Density of ``dist`` at ``w`` (scalar or array)."""
    _check_finite(w)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("w must be nonnegative")
    out = np.exp(ncchisq_logpdf(w, dist.p, dist.lam))
    return float(out) if out.ndim == 0 else out


def _poisson_window(mu, tail_sd=12.0, pad=10):
    s = np.sqrt(mu)
    return int(max(0.0, np.floor(mu - tail_sd * s - pad))), int(np.ceil(mu + tail_sd * s + pad))


def ncchisq_pdf_series(w, dist: NcChiSq, spec: SeriesSpec = SeriesSpec()):
    """Density as a Poisson(lam/2) mixture of central chi-squares.

    Independent of the Bessel evaluation; used as its oracle.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    mu = 0.5 * dist.lam
    lo, hi = _poisson_window(mu)
    # far in the tail the largest terms sit near n = sqrt(lam w)/2, not near mu
    for nstar in (0.5 * np.sqrt(dist.lam * w.min()), 0.5 * np.sqrt(dist.lam * w.max())):
        a, b = _poisson_window(nstar)
        lo, hi = min(lo, a), max(hi, b)
    if hi - lo + 1 > spec.max_terms:
        raise SeriesError("Poisson window exceeds max_terms")
    n = np.arange(lo, hi + 1)
    logw = stats.poisson.logpmf(n, mu)
    logc = np.stack([_central_logpdf(w, dist.p + 2 * k) for k in n], axis=1)
    out = np.exp(logw[None, :] + logc).sum(axis=1)
    return float(out[0]) if out.size == 1 else out


def ncchisq_sample(dist: NcChiSq, rng: np.random.Generator, size=None):
    """Draw from chi2_p(lam) as a Poisson(lam/2)-mixed central chi-square."""
    n = rng.poisson(0.5 * dist.lam, size=size)
    return rng.chisquare(dist.p + 2 * n)


def ncchisq_moment(dist: NcChiSq, k: int) -> float:
    """Raw moment ``E[W**k]`` for k in 1..4, from the cumulants ``2**(j-1) (j-1)! (p + j lam)``."""
    if k not in (1, 2, 3, 4):
        raise ValueError(f"moment order must be in 1..4, got {k}")
    p, lam = dist.p, dist.lam
    c1, c2, c3, c4 = (2.0 ** (j - 1) * special.factorial(j - 1) * (p + j * lam) for j in range(1, 5))
    return float([
        c1,
        c2 + c1 ** 2,
        c3 + 3 * c2 * c1 + c1 ** 3,
        c4 + 4 * c3 * c1 + 3 * c2 ** 2 + 6 * c2 * c1 ** 2 + c1 ** 4,
    ][k - 1])


# ---------------------------------------------------------------------------
# tilted integrals t_k and the Poisson-mixture pieces w_k

def log_g0(z, params):
    """log of the radial prior factor ``(a + z)**(-b)``."""
    with np.errstate(divide="ignore"):
        return -params.b * np.log(params.a + np.asarray(z, dtype=float))


def _log_gamma_pdf_centered(u, c):
    """log Gamma(c, 1) density at ``u`` with the mode-relative part kept small.

    ``(c-1) log u - u - lgamma(c)`` loses ~12 digits when c is large; writing
    ``u = c (1 + e)`` isolates the node-dependent part ``(c-1) log1p(e) - c e``.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        e = u / c - 1.0
        const = (c - 1.0) * np.log(c) - c - special.gammaln(c)
        return const + (c - 1.0) * np.log1p(e) - c * e


def _wk_batch(k: int, ns, params, quad: QuadratureSpec):
    """``w_k(n) = Gamma(s+k)/Gamma(s) * E[g0(2V)]``, ``V ~ Gamma(s+k)``, ``s = n + p/2``."""
    ns = np.atleast_1d(np.asarray(ns, dtype=float))
    c = ns + 0.5 * params.p + k
    c_col = c[:, None]

    def f(u, rows):
        return np.exp(log_g0(2.0 * u, params) + _log_gamma_pdf_centered(u, c_col[rows]))

    expect = integrate_halfline(f, np.maximum(c - 1.0, 0.0), np.sqrt(c), quad)
    return np.exp(special.gammaln(c) - special.gammaln(c - k)) * expect


_WK_QUAD = QuadratureSpec(rel_tol=1e-12, max_depth=10)


class _WkTable:
    """Memo of ``w_k(n)`` values keyed by ``(k, params)``; safe for concurrent use."""

    def __init__(self):
        self._lock = threading.Lock()
        self._store: dict = {}

    def get(self, k, lo, hi, params):
        key = (k, params.p, params.a, params.b)
        with self._lock:
            arr = self._store.get(key)
        if arr is None or arr.size <= hi:
            size = max(hi + 1, 64 if arr is None else 2 * arr.size)
            start = 0 if arr is None else arr.size
            new = _wk_batch(k, np.arange(start, size), params, _WK_QUAD)
            arr = new if arr is None else np.concatenate([arr, new])
            with self._lock:
                cur = self._store.get(key)
                if cur is None or cur.size < arr.size:
                    self._store[key] = arr
        return arr[lo:hi + 1]


_WK = _WkTable()


def _require_a_positive(params):
    if not params.a > 0:
        raise ValueError("w_k and t_k need a > 0: with a = 0 the integrand "
                         "(z/2)^(n+p/2+k-1-b) may fail to be integrable at 0")


def wk_value(k: int, n: int, params, spec: SeriesSpec | None = None) -> float:
    """``w_k(n) = int_0^inf g0(z) (z/2)**(n+p/2+k-1) exp(-z/2) / (2 Gamma(n+p/2)) dz``.

    Equals ``E[g0(U) U**k] / 2**k`` for ``U ~ chi2_{p+2n}``.
    """
    _require_a_positive(params)
    if k < 0 or n < 0:
        raise ValueError("k and n must be nonnegative")
    return float(_wk_batch(k, [n], params, _WK_QUAD)[0])


def tk_value(k: int, y: float, params, spec: SeriesSpec = SeriesSpec()) -> float:
    """``t_k(y) = 2**k E[w_k(N)]`` with ``N ~ Poisson(y/2)``.

    Terms are summed over a Poisson window that is widened until the
    Poisson tail mass outside it, times a bound on the terms there, falls
    below ``spec.rel_tol`` relative to the sum.
    """
    _require_a_positive(params)
    if y < 0 or not np.isfinite(y):
        raise ValueError("y must be finite and nonnegative")
    mu = 0.5 * y
    lo, hi = _poisson_window(mu, tail_sd=8.0)
    # sup of g0(u) u^k is bounded by a^-b * u^k on the left and polynomial growth on the right
    while True:
        if hi - lo + 1 > spec.max_terms:
            raise SeriesError(f"t_{k}({y}) needs more than {spec.max_terms} terms")
        n = np.arange(lo, hi + 1)
        wk = _WK.get(k, lo, hi, params)
        total = float(np.sum(np.exp(stats.poisson.logpmf(n, mu)) * wk))
        right_tail = stats.poisson.sf(hi, mu)
        left_tail = stats.poisson.cdf(lo - 1, mu) if lo > 0 else 0.0
        s_hi = hi + 0.5 * params.p + k
        right_bound = right_tail * params.a ** (-params.b) * np.exp(
            special.gammaln(s_hi + k + 1) - special.gammaln(s_hi))
        left_bound = left_tail * params.a ** (-params.b) * np.exp(
            special.gammaln(lo + 0.5 * params.p + k) - special.gammaln(lo + 0.5 * params.p))
        if right_bound <= spec.rel_tol * total and left_bound <= spec.rel_tol * total:
            return 2.0 ** k * total
        width = hi - lo
        if right_bound > spec.rel_tol * total:
            hi += max(width // 2, 16)
        if left_bound > spec.rel_tol * total:
            lo = max(0, lo - max(width // 2, 16))


def _panels_for(y, kmax, p, width=0.75):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    v_lo = np.maximum(np.sqrt(y) - 14.0, 0.0)
    v_hi = np.sqrt(y + p + 4 * kmax) + 14.0
    n_panels = int(np.ceil(np.max(v_hi - v_lo) / width))
    return sqrt_panels(v_lo, v_hi, n_panels, order=12)


def tilted_moments(y, params, kmax: int, center=None):
    """``int g0(u) (u - center)**j f(u; p, y) du`` for ``j = 0..kmax`` by sqrt-space panels.

    Vectorised over ``y``; returns an array of shape ``(len(y), kmax + 1)``.
    ``center`` defaults to 0 (raw tilted moments).  This is the direct
    quadrature route to ``t_k``; dividing by column 0 gives posterior moments.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x, w = _panels_for(y, kmax, params.p)
    logf = ncchisq_logpdf(x, params.p, y[:, None]) + log_g0(x, params)
    base = w * np.exp(logf)
    d = x if center is None else x - np.atleast_1d(np.asarray(center, dtype=float))[:, None]
    out = np.empty((y.size, kmax + 1))
    acc = base
    for j in range(kmax + 1):
        out[:, j] = acc.sum(axis=1)
        acc = acc * d
    return out


def tk_direct(k: int, y, params):
    """``t_k(y)`` by direct quadrature against the Bessel-form density."""
    out = tilted_moments(y, params, k)[:, k]
    return float(out[0]) if np.ndim(y) == 0 else out


def posterior_raw_moments(w, params, kmax: int):
    """``t_j(w)/t_0(w)`` for ``j = 0..kmax``, vectorised over ``w``."""
    tm = tilted_moments(w, params, kmax)
    return tm / tm[:, :1]


def posterior_central_moments(w, center, params, kmax: int):
    """``E[(beta - center)**j | w]`` for ``j = 0..kmax`` under the reduced posterior."""
    tm = tilted_moments(w, params, kmax, center=center)
    return tm / tm[:, :1]


def binomial_shift(moments, shift):
    """Re-centre moments: from ``E[(X - c)**j]`` to ``E[(X - c + shift)**k]``.

    ``moments`` has the order index last; ``shift`` broadcasts against the
    leading axes.  With ``shift = c`` this turns central moments into raw ones.
    """
    moments = np.asarray(moments, dtype=float)
    shift = np.asarray(shift, dtype=float)[..., None]
    kmax = moments.shape[-1] - 1
    out = np.zeros(np.broadcast_shapes(moments.shape, shift.shape))
    for k in range(kmax + 1):
        for j in range(k + 1):
            out[..., k] += comb(k, j) * moments[..., j] * shift[..., 0] ** (k - j)
    return out


# ---------------------------------------------------------------------------

def _ratio_cf(order, kappa, terms=400):
    """Gauss continued fraction for I_order/I_{order-1}, modified Lentz."""
    tiny = 1e-300
    f = tiny
    c, d = f, 0.0
    for j in range(terms):
        b = 2.0 * (order + j) / kappa
        d = b + d
        d = 1.0 / (d if d != 0 else tiny)
        c = b + 1.0 / c
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return f


def bessel_ratio(order, kappa):
    """``I_order(kappa) / I_{order-1}(kappa)`` for ``order >= 1/2``, vectorised.

    Uses exponentially scaled Bessel functions, so large ``kappa`` cannot
    overflow; where the scaled values underflow (small ``kappa`` at high
    order) the Gauss continued fraction takes over.
    """
    if order < 0.5:
        raise ValueError("order must be >= 1/2")
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0) or not np.all(np.isfinite(kappa)):
        raise ValueError("kappa must be finite and nonnegative")
    with np.errstate(all="ignore"):
        num = special.ive(order, kappa)
        den = special.ive(order - 1.0, kappa)
        out = num / den
    bad = ~((den > 1e-280) & (num > 1e-280)) & (kappa > 0)
    out = np.where(kappa == 0, 0.0, out)
    if np.any(bad):
        flat = np.array(out, dtype=float).ravel()
        kf = kappa.ravel()
        for i in np.flatnonzero(bad):
            flat[i] = _ratio_cf(order, float(kf[i]))
        out = flat.reshape(np.shape(kappa))
    return float(out) if np.ndim(out) == 0 else out
