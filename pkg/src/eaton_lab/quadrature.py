"""Quadrature on [0, inf) used throughout the package.

Two families of rules live here:

* an adaptive double-exponential scheme (tanh-sinh on bounded pieces,
  exp-sinh on the tail) for scalar or batched integrals whose scale is
  known roughly, and
* fixed composite Gauss-Legendre panels laid out uniformly in ``sqrt(x)``.

The second family is what the kernel machinery uses.  Under ``x = v**2`` the
noncentral chi-square family becomes close to a unit-variance Gaussian in
``v`` (it is the law of a norm ``||X||``), and the ``x**(p/2 - 1)`` behaviour
at the origin turns into a polynomial, so unit-width panels are accurate to
near machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when an adaptive rule fails to reach its tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for adaptive integration.

    ``max_depth`` is the number of step halvings the double-exponential
    rules may take after the initial level.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 0.0
    max_depth: int = 9

    def __post_init__(self):
        if not (0 < self.rel_tol <= 1e-4):
            raise ValueError(f"rel_tol must lie in (0, 1e-4], got {self.rel_tol}")
        if self.abs_tol < 0:
            raise ValueError("abs_tol must be nonnegative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be a positive integer")


DEFAULT_QUAD = QuadratureSpec()

_T_MAX = 4.0


def _tanh_sinh_nodes(level: int):
    """Offsets of tanh-sinh abscissae from the nearer endpoint on [-1, 1].

    Returns ``(dist, weight, sign)`` for the points added at ``level``; level 0
    carries the full set at step 1/2, deeper levels only the odd points.
    """
    h = 0.5 ** (level + 1)
    if level == 0:
        t = np.arange(-int(_T_MAX / h), int(_T_MAX / h) + 1) * h
    else:
        k = np.arange(1, int(_T_MAX / h) + 1, 2)
        t = np.concatenate([-k[::-1], k]) * h
    u = 0.5 * np.pi * np.sinh(np.abs(t))
    # 1 - tanh(u) without cancellation
    dist = 2.0 / (np.exp(2.0 * u) + 1.0)
    weight = h * 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    sign = np.sign(t)
    return dist, weight, sign


@lru_cache(maxsize=32)
def _ts_level(level: int):
    d, w, s = _tanh_sinh_nodes(level)
    return d, w, s


def _exp_sinh_nodes(level: int):
    h = 0.5 ** (level + 1)
    if level == 0:
        t = np.arange(-int(4.0 / h), int(4.0 / h) + 1) * h
    else:
        k = np.arange(1, int(4.0 / h) + 1, 2)
        t = np.concatenate([-k[::-1], k]) * h
    e = np.exp(0.5 * np.pi * np.sinh(t))
    return e, h * 0.5 * np.pi * np.cosh(t) * e


@lru_cache(maxsize=32)
def _es_level(level: int):
    return _exp_sinh_nodes(level)


def _eval(f, x, rows):
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        y = f(x, rows)
    return np.where(np.isfinite(y), y, 0.0)


def _batch(*arrays):
    out = [np.atleast_1d(np.asarray(a, dtype=float)) for a in arrays]
    return np.broadcast_arrays(*out)


def tanh_sinh(f, a, b, quad: QuadratureSpec = DEFAULT_QUAD, rows=None):
    """Batched tanh-sinh integration of ``f`` over ``[a, b]``.

    ``a`` and ``b`` broadcast to a batch shape ``(B,)``.  ``f(x, rows)``
    receives nodes of shape ``(B, M)`` together with the integer batch-row
    labels ``rows`` (default ``arange(B)``) and returns an array shaped like
    ``x``.  Integrable endpoint singularities are fine: abscissae are built
    from their distance to the nearer endpoint, so ``f`` is never evaluated
    at ``a`` or ``b``.
    """
    a, b = _batch(a, b)
    rows = np.arange(a.size) if rows is None else rows
    half = 0.5 * (b - a)[:, None]
    total = prev = None
    for level in range(quad.max_depth + 1):
        d, w, s = _ts_level(level)
        x = np.where(s < 0, a[:, None] + half * d, b[:, None] - half * d)
        part = (_eval(f, x, rows) * w).sum(axis=1) * half[:, 0]
        total = part if level == 0 else 0.5 * total + part
        if level >= 2:
            err = np.abs(total - prev)
            if np.all(err <= quad.rel_tol * np.abs(total) + quad.abs_tol):
                return total
        worst = float(np.max(np.abs(total - prev))) if prev is not None else np.inf
        prev = total
    raise QuadratureError(
        f"tanh-sinh did not converge in {quad.max_depth} refinements "
        f"(last change {worst:.3e})")


def exp_sinh(f, a, scale, quad: QuadratureSpec = DEFAULT_QUAD, rows=None):
    """Batched integration over ``[a, inf)`` with ``x = a + scale*exp(pi/2 sinh t)``."""
    a, scale = _batch(a, scale)
    rows = np.arange(a.size) if rows is None else rows
    total = prev = None
    for level in range(quad.max_depth + 1):
        e, w = _es_level(level)
        x = a[:, None] + scale[:, None] * e
        part = (_eval(f, x, rows) * w).sum(axis=1) * scale
        total = part if level == 0 else 0.5 * total + part
        if level >= 2:
            err = np.abs(total - prev)
            if np.all(err <= quad.rel_tol * np.abs(total) + quad.abs_tol):
                return total
        prev = total
    raise QuadratureError("exp-sinh tail integral did not converge")


def integrate_halfline(f, center, scale, quad: QuadratureSpec = DEFAULT_QUAD,
                       width: float = 10.0):
    """Integrate ``f(x, rows)`` over ``[0, inf)`` given a rough location and spread.

    The line is split at ``center -/+ width*scale``; the bounded pieces use
    tanh-sinh and the tail beyond the upper split uses exp-sinh.  The outer
    pieces are held to an absolute tolerance relative to the central piece,
    which carries essentially all of the mass.
    """
    center, scale = _batch(center, scale)
    lo = np.maximum(center - width * scale, 0.0)
    hi = np.maximum(center + width * scale, lo + scale)
    mid = tanh_sinh(f, lo, hi, quad)
    loose = QuadratureSpec(quad.rel_tol,
                           quad.abs_tol + quad.rel_tol * float(np.max(np.abs(mid))),
                           quad.max_depth)
    left = np.zeros_like(mid)
    idx = np.flatnonzero(lo > 0)
    if idx.size:
        left[idx] = tanh_sinh(f, 0.0, lo[idx], loose, rows=idx)
    tail = exp_sinh(f, hi, scale, loose)
    return left + mid + tail


def integrate_scalar(g, center, scale, quad: QuadratureSpec = DEFAULT_QUAD):
    """Scalar convenience wrapper around :func:`integrate_halfline` for ``g(x)``."""
    return float(integrate_halfline(lambda x, rows: g(x), center, scale, quad)[0])


@lru_cache(maxsize=16)
def gauss_legendre(order: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def sqrt_panels(v_lo, v_hi, n_panels: int, order: int = 10):
    """Composite Gauss-Legendre rule, uniform in ``v = sqrt(x)``.

    ``v_lo``/``v_hi`` may be arrays of shape ``(B,)``; the result is
    ``(x, w)`` with shape ``(B, n_panels*order)`` such that
    ``sum(w * g(x))`` approximates ``int_{v_lo**2}^{v_hi**2} g(x) dx``.
    """
    v_lo = np.atleast_1d(np.asarray(v_lo, dtype=float))
    v_hi = np.atleast_1d(np.asarray(v_hi, dtype=float))
    v_lo, v_hi = np.broadcast_arrays(v_lo, v_hi)
    t, wt = gauss_legendre(order)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    u = (edges[:-1, None] + np.diff(edges)[:, None] * t[None, :]).ravel()
    wu = (np.diff(edges)[:, None] * wt[None, :]).ravel()
    span = (v_hi - v_lo)[:, None]
    v = v_lo[:, None] + span * u[None, :]
    return v * v, 2.0 * v * span * wu[None, :]


def sqrt_window(center, extra_hi: float = 0.0, half_width: float = 14.0):
    """Window in ``v = sqrt(x)`` holding a noncentral chi-square with noncentrality ``center``."""
    c = np.sqrt(np.maximum(np.asarray(center, dtype=float), 0.0))
    return np.maximum(c - half_width, 0.0), c + half_width + extra_hi
