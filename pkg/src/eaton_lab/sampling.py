"""Sampling plumbing: tabulated inverse CDFs, tilted mixtures, random substreams."""

from __future__ import annotations

import numpy as np
from scipy import integrate, special, stats
from scipy.interpolate import PchipInterpolator

from .dist import _WK, log_g0


class TableError(RuntimeError):
    """An inverse-CDF table could not hold the distribution it was built for."""


class InverseCDFTable:
    """Inverse-CDF sampler for a density tabulated on a grid uniform in ``sqrt(x)``.

    ``density`` is evaluated on ``grid_size`` points spanning ``[lo, hi]``;
    the CDF comes from cumulative Simpson integration in ``v = sqrt(x)`` and
    is inverted with a monotone cubic.  If the tabulated mass differs from 1
    by more than ``mass_tol`` the table refuses to build rather than silently
    truncate.
    """

    def __init__(self, density, lo, hi, grid_size=4096, mass_tol=1e-6):
        v = np.linspace(np.sqrt(max(lo, 0.0)), np.sqrt(hi), grid_size)
        x = v * v
        with np.errstate(divide="ignore", invalid="ignore"):
            dens_v = np.asarray(density(x), dtype=float) * 2.0 * v
        dens_v = np.where(np.isfinite(dens_v), dens_v, 0.0)
        cdf = np.concatenate([[0.0], integrate.cumulative_simpson(dens_v, x=v)])
        cdf = np.maximum.accumulate(np.maximum(cdf, 0.0))
        mass = cdf[-1]
        if not abs(mass - 1.0) <= mass_tol:
            raise TableError(f"tabulated mass {mass:.10f} on [{lo:.6g}, {hi:.6g}] "
                             f"differs from 1 by more than {mass_tol}")
        cdf /= mass
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        self.lo, self.hi, self.mass = lo, hi, mass
        self.grid = x
        self.cdf_values = cdf
        self._inv = PchipInterpolator(cdf[keep], v[keep])
        self._cdf = PchipInterpolator(v, cdf)

    def cdf(self, x):
        v = np.sqrt(np.clip(np.asarray(x, dtype=float), self.grid[0], self.grid[-1]))
        return np.clip(self._cdf(v), 0.0, 1.0)

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        v = self._inv(u)
        out = np.clip(v, np.sqrt(self.grid[0]), np.sqrt(self.grid[-1])) ** 2
        return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# exact sampler for densities proportional to beta**k g0(beta) f(beta; p, w)

def _sample_tilted_gamma(shape, params, rng):
    """Draw from density proportional to ``(a + x)**(-b) x**(shape-1) exp(-x/2)``.

    Rejection from ``2 Gamma(shape - b')`` with ``b' = clip(shape - 1, 0, b)``;
    the ratio ``x**b' (a + x)**(-b)`` is bounded because ``b' <= b``.
    """
    shape = np.asarray(shape, dtype=float)
    a, b = params.a, params.b
    out = np.empty(shape.shape)
    if a == 0:
        return 2.0 * rng.standard_gamma(shape - b)
    bp = np.clip(shape - 1.0, 0.0, b)
    # log sup_x x^b' (a + x)^-b
    with np.errstate(divide="ignore", invalid="ignore"):
        xstar = np.where(bp < b, a * bp / np.where(bp < b, b - bp, 1.0), np.inf)
        log_m = np.where(
            bp >= b, 0.0,
            np.where(bp == 0, -b * np.log(a), bp * np.log(xstar) - b * np.log(a + xstar)))
    pending = np.arange(shape.size)
    flat_shape, flat_bp, flat_lm = shape.ravel(), bp.ravel(), log_m.ravel()
    flat_out = out.ravel()
    while pending.size:
        x = 2.0 * rng.standard_gamma(flat_shape[pending] - flat_bp[pending])
        with np.errstate(divide="ignore"):
            log_ratio = flat_bp[pending] * np.log(x) - b * np.log(a + x) - flat_lm[pending]
        acc = np.log(rng.random(pending.size)) <= log_ratio
        flat_out[pending[acc]] = x[acc]
        pending = pending[~acc]
    return flat_out.reshape(shape.shape)


def _sample_mixing_index(k, w, params, rng):
    """Draw ``N`` with ``P(N = n)`` proportional to ``Poisson(n; w/2) * w_k(n)``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    mu = 0.5 * w
    s = np.sqrt(mu)
    lo = np.maximum(np.floor(mu - 10.0 * s - 10.0), 0).astype(np.int64)
    hi = np.ceil(mu + 10.0 * s + 10.0 + 2 * k).astype(np.int64)
    width = int(np.max(hi - lo)) + 1
    table = _WK.get(k, 0, int(np.max(lo) + width), params)
    out = np.empty(w.shape, dtype=np.int64)
    chunk = max(1, 2_000_000 // width)
    u = rng.random(w.shape)
    for start in range(0, w.size, chunk):
        sl = slice(start, start + chunk)
        n = lo[sl, None] + np.arange(width)[None, :]
        logp = stats.poisson.logpmf(n, mu[sl, None]) + np.log(table[n])
        logp -= logp.max(axis=1, keepdims=True)
        cdf = np.cumsum(np.exp(logp), axis=1)
        cdf /= cdf[:, -1:]
        idx = (cdf < u[sl, None]).sum(axis=1)
        out[sl] = lo[sl] + np.minimum(idx, width - 1)
    return out


def sample_tilted_ncchisq(w, k, params, rng):
    """Exact draws with density proportional to ``beta**k g0(beta) f(beta; p, w)``.

    ``k = 0`` is the reduced posterior given ``w``; ``k = 1`` its size-biased
    version.  Uses the Poisson mixture ``f(.; p, w) = sum_n Poisson(n; w/2)
    chi2_{p+2n}``: the mixing index is drawn with weights ``w_k(n)`` and the
    component is a gamma tilted by ``(a + beta)**(-b)``.
    """
    n = _sample_mixing_index(k, w, params, rng)
    return _sample_tilted_gamma(n + 0.5 * params.p + k, params, rng)


# ---------------------------------------------------------------------------

def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)`` via ``SeedSequence`` spawn keys.

    The same key always yields the same stream, whatever order or thread the
    streams are created in.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance between ``samples`` and a CDF callable."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    f = cdf(xs)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


__all__ = ["InverseCDFTable", "TableError", "sample_tilted_ncchisq", "substream",
           "ks_distance", "log_g0", "special"]
