"""Drift criterion from transition moments; chain simulation.

The drift criterion for a chain on ``[0, inf)`` with centred moments
``m_k(v) = int (x - v)**k K(dx | v)`` asks that

* ``(log v / v) m_3(v) / m_2(v) -> 0``, and
* ``m_1(v) <= m_2(v) / (2 v) (1 + phi(v))`` for all large ``v``,

here with ``phi(v) = 1/sqrt(v)``.  Simulation results are diagnostics only:
a finite horizon cannot establish recurrence.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .kernels import TransitionKernel, WeightConfig, rtilde_central_moments
from .quadrature import DEFAULT_QUAD, QuadratureError, QuadratureSpec, sqrt_panels
from .sampling import substream


@dataclass
class DriftReport:
    alpha_grid: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    cond1: np.ndarray
    cond2_slack: np.ndarray
    n0: int | None
    sup_check: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def n0_alpha(self):
        return None if self.n0 is None else float(self.alpha_grid[self.n0])

    def ratio_bounded(self, lo=10.0, hi=1e4) -> bool:
        """``max m3/m2`` over ``[lo, hi]`` is at most twice the median over its top decade."""
        sel = (self.alpha_grid >= lo) & (self.alpha_grid <= hi)
        r = self.m3[sel] / self.m2[sel]
        top = self.alpha_grid[sel] >= hi / 10.0
        return bool(np.max(r) <= 2.0 * np.median(r[top]))

    def cond1_decreasing(self, decades=2) -> bool:
        top = self.alpha_grid >= self.alpha_grid[-1] / 10.0 ** decades
        c = self.cond1[top]
        return bool(np.all(np.diff(c) < 0) and c[-1] < c[0])

    def rows(self):
        for i, a in enumerate(self.alpha_grid):
            yield {"alpha": a, "m1": self.m1[i], "m2": self.m2[i], "m3": self.m3[i],
                   "cond1": self.cond1[i], "cond2_slack": self.cond2_slack[i]}


@dataclass(frozen=True)
class TargetSet:
    """Half-line interval ``[lo, hi]`` or, in ``R^p``, the ball ``||theta|| <= radius``."""

    lo: float = 0.0
    hi: float = 10.0
    kind: str = "interval"

    @classmethod
    def ball(cls, radius: float):
        return cls(0.0, float(radius), "ball")

    def contains(self, states):
        states = np.asarray(states, dtype=float)
        if self.kind == "ball":
            return np.sum(states * states, axis=-1) <= self.hi * self.hi
        return (states >= self.lo) & (states <= self.hi)


@dataclass(frozen=True)
class ChainConfig:
    seed: int
    n_paths: int
    horizon: int
    init: object = 0.0
    target_set: TargetSet = TargetSet()
    group_size: int = 64
    dump_paths: int = 0

    def __post_init__(self):
        if self.horizon < 1 or self.n_paths < 1 or self.group_size < 1:
            raise ValueError("chain sizes must be >= 1")


@dataclass
class HittingStats:
    returned: int
    censored: int
    return_fraction: float
    mean_return_time_given_return: float
    n_paths: int
    horizon: int
    label: str = "diagnostic"

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# moments

def _moment_once(kernel, alpha, k, n_panels):
    v_lo, v_hi = kernel.window(alpha)
    x, w = sqrt_panels(v_lo, v_hi, n_panels, order=12)
    x, w = x[0], w[0]
    dens = kernel.matrix(x, np.array([alpha]))[:, 0]
    return float(np.sum(w * dens * (x - alpha) ** k))


def transition_moment(kernel: TransitionKernel, alpha: float, k: int,
                      quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``m_k(alpha) = int (beta - alpha)**k K(dbeta | alpha)`` by direct quadrature."""
    if kernel.state_space != "half_line":
        raise ValueError("transition moments are defined for half-line kernels")
    if k not in (1, 2, 3):
        raise ValueError("k must be in 1..3")
    n = 64
    prev = _moment_once(kernel, alpha, k, n)
    scale = np.sqrt(max(_moment_once(kernel, alpha, 2, n), 1e-300)) ** k
    for _ in range(4):
        n *= 2
        cur = _moment_once(kernel, alpha, k, n)
        if abs(cur - prev) <= quad.rel_tol * max(abs(cur), scale) + quad.abs_tol:
            return cur
        prev = cur
    raise QuadratureError(f"m_{k}({alpha}) did not converge")


def weighted_eaton_moments(alpha, params, weights: WeightConfig = WeightConfig(),
                           quad: QuadratureSpec = DEFAULT_QUAD):
    """``(m1, m2, m3)`` of the weighted Eaton kernel from moments of the unweighted one.

    With ``C_j = int (beta - alpha)**j r(beta | alpha)``,
    ``m_k = (C_{k+1} + (2 alpha + c) C_k) / (C_1 + 2 alpha + c)``.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    C = rtilde_central_moments(alpha, params, 4, quad)
    s = 2.0 * alpha + weights.c
    den = C[:, 1] + s
    return tuple((C[:, k + 1] + s * C[:, k]) / den for k in (1, 2, 3))


def _kernel_moments(kernel, grid, quad, failures):
    if kernel.meta.get("weighted_eaton"):
        return weighted_eaton_moments(grid, kernel.meta["params"], kernel.meta["weights"], quad)
    out = np.full((3, grid.size), np.nan)
    for i, a in enumerate(grid):
        for k in (1, 2, 3):
            try:
                out[k - 1, i] = transition_moment(kernel, float(a), k, quad)
            except QuadratureError as exc:
                failures.append((float(a), k, str(exc)))
    return out[0], out[1], out[2]


def default_drift_grid():
    return np.geomspace(1.0, 1e6, 40)


def drift_check(kernel: TransitionKernel, grid=None, weights: WeightConfig | None = None,
                quad: QuadratureSpec = DEFAULT_QUAD, sup_ns=(), phi=None) -> DriftReport:
    """Evaluate the two moment conditions on ``grid`` (default 40 log points on ``[1, 1e6]``).

    The weighted Eaton kernel uses the moment algebra above; any other
    half-line kernel is integrated directly.  ``n0`` is the first grid index
    from which the second condition's slack stays nonnegative, or ``None``.
    """
    grid = default_drift_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("grid must be positive and strictly increasing")
    if grid[-1] / grid[0] < 100:
        raise ValueError("grid must cover at least two decades")
    if weights is not None and kernel.meta.get("weighted_eaton"):
        kernel = kernel.with_measure(kernel.sym_measure_density)
        kernel.meta["weights"] = weights
    failures: list = []
    m1, m2, m3 = _kernel_moments(kernel, grid, quad, failures)
    phi = (lambda v: 1.0 / np.sqrt(v)) if phi is None else phi
    cond1 = np.log(grid) / grid * m3 / m2
    slack = m2 / (2.0 * grid) * (1.0 + phi(grid)) - m1
    ok = slack >= 0
    n0 = None
    if ok[-1]:
        bad = np.flatnonzero(~ok)
        n0 = int(bad[-1] + 1) if bad.size else 0
    sup = {int(n): sup_condition_check(kernel, int(n), None, quad) for n in sup_ns}
    return DriftReport(grid, m1, m2, m3, cond1, slack, n0, sup, failures)


def sup_condition_check(kernel: TransitionKernel, n: int, probe_grid=None,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``delta(n) = max_v K([0, n] | v)`` over probes in ``[0, n]``; the condition needs ``< 1``."""
    probe = np.linspace(0.0, n, 41) if probe_grid is None else np.asarray(probe_grid, float)
    if np.any(probe < 0) or np.any(probe > n):
        raise ValueError("probe grid must lie in [0, n]")
    prev = None
    panels = 16
    while True:
        x, w = sqrt_panels(0.0, np.sqrt(n), panels, order=12)
        mass = w[0] @ kernel.matrix(x[0], probe)
        val = float(np.max(mass))
        if prev is not None and abs(val - prev) <= quad.rel_tol + quad.abs_tol:
            return val
        if panels >= 512:
            return val
        prev, panels = val, panels * 2


def sup_condition_passes(delta: float) -> bool:
    return delta < 1.0 - 1e-6


# ---------------------------------------------------------------------------
# simulation

def _init_states(kernel, init, n):
    if kernel.state_space == "euclidean":
        x0 = np.broadcast_to(np.asarray(init, dtype=float), (kernel.p,))
        return np.tile(x0, (n, 1))
    return np.full(n, float(init))


def _simulate_group(kernel, config, g, n, dump):
    """Run ``n`` paths of group ``g`` in lockstep; returns (hit_time array, dumped rows)."""
    rng = substream(config.seed, g)
    target = config.target_set
    state = _init_states(kernel, config.init, n)
    hit = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    t = 0
    rows = []
    ndump = min(dump, n)
    if ndump:
        for i in range(ndump):
            rows.append((g * config.group_size + i, 0, state[i]))
    block = 8
    while alive.size and t < config.horizon:
        if kernel.increment_sampler is not None:
            L = min(block, config.horizon - t)
            inc = kernel.increment_sampler(rng, (L, alive.size))
            path = state[alive][None] + np.cumsum(inc, axis=0)
            inside = target.contains(path)
            first = np.where(inside.any(axis=0), inside.argmax(axis=0), L)
            if ndump:
                for j, pid in enumerate(alive):
                    if pid < ndump:
                        for s in range(min(first[j] + 1, L)):
                            rows.append((g * config.group_size + pid, t + s + 1, path[s, j]))
            done = first < L
            hit[alive[done]] = t + first[done] + 1
            state[alive[~done]] = path[L - 1, ~done]
            alive = alive[~done]
            t += L
            block = min(block * 2, 4096)
        else:
            new = kernel.sampler(state[alive], rng)
            state[alive] = new
            t += 1
            if ndump:
                for j, pid in enumerate(alive):
                    if pid < ndump:
                        rows.append((g * config.group_size + pid, t, new[j]))
            done = target.contains(new)
            hit[alive[done]] = t
            alive = alive[~done]
    return hit, rows


def _workers(threads):
    if threads is None:
        env = os.environ.get("EATON_LAB_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def simulate_chain(kernel: TransitionKernel, config: ChainConfig, threads: int | None = None,
                   path_csv: str | os.PathLike | None = None) -> HittingStats:
    """Run paths from ``config.init`` until the first return to the target (``n >= 1``) or the horizon.

    Paths are split into groups of ``config.group_size``; group ``g`` draws from
    its own stream keyed by ``(seed, g)``, so results do not depend on
    ``threads`` (default ``EATON_LAB_THREADS`` or 1).  Censored paths are
    counted, never imputed.  ``config.dump_paths`` paths per group are written
    to ``path_csv`` when given.
    """
    n_groups = -(-config.n_paths // config.group_size)
    sizes = [min(config.group_size, config.n_paths - g * config.group_size) for g in range(n_groups)]
    dump = config.dump_paths if path_csv is not None else 0
    with ThreadPoolExecutor(max_workers=_workers(threads)) as ex:
        results = list(ex.map(lambda g: _simulate_group(kernel, config, g, sizes[g], dump),
                              range(n_groups)))
    hits = np.concatenate([r[0] for r in results])
    returned = int(np.count_nonzero(hits))
    mean_t = float(hits[hits > 0].mean()) if returned else float("nan")
    if path_csv is not None:
        with open(path_csv, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            euclid = kernel.state_space == "euclidean"
            wr.writerow(["path_id", "step"] + ([f"state_{i}" for i in range(kernel.p)] if euclid else ["state"]))
            for _, rows in results:
                for pid, step, st in rows:
                    vals = np.atleast_1d(st)
                    wr.writerow([pid, step] + [f"{v:.17g}" for v in vals])
    return HittingStats(returned, config.n_paths - returned, returned / config.n_paths,
                        mean_t, config.n_paths, config.horizon)


__all__ = ["DriftReport", "TargetSet", "ChainConfig", "HittingStats", "transition_moment",
           "weighted_eaton_moments", "drift_check", "default_drift_grid",
           "sup_condition_check", "sup_condition_passes", "simulate_chain"]
