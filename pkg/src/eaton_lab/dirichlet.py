"""Dirichlet forms and capacities of discretised half-line chains.

A chain is discretised on log-spaced cells of ``[0, B]`` plus one absorbing
"outside" cell.  With ``A_ij = m_i P_ij`` (``m`` the symmetrising mass of
each cell) the Dirichlet form of per-cell values ``h`` with ``h = 0``
outside is

    Delta(h) = 1/2 sum_ij A_ij (h_i - h_j)**2 + sum_i A_i,out h_i**2,

the outside term counting the flux in both directions.  Capacity of a set
``D`` is the minimum of ``Delta`` over ``h`` pinned to 1 on ``D``; divided
by the mass of ``D`` it is the mass-averaged probability of leaving
``[0, B]`` before coming back to ``D``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy import linalg

from .kernels import TransitionKernel
from .quadrature import DEFAULT_QUAD, QuadratureSpec, sqrt_panels


class DiscretizationError(RuntimeError):
    pass


class CapacityError(RuntimeError):
    pass


@dataclass
class DiscretizedChain:
    cell_edges: np.ndarray
    transition_matrix: np.ndarray          # (n, n + 1); last column is the outside cell
    cell_masses: np.ndarray
    centers: np.ndarray | None = None
    correction_norm: float = 0.0

    def __post_init__(self):
        self._sym = None

    @property
    def n_cells(self) -> int:
        return self.cell_masses.size

    @property
    def flux(self):
        """Symmetrised mass-weighted matrix ``A`` and the outside flux vector."""
        if self._sym is None:
            A = self.cell_masses[:, None] * self.transition_matrix[:, :-1]
            self._sym = (0.5 * (A + A.T), self.cell_masses * self.transition_matrix[:, -1])
        return self._sym

    @classmethod
    def from_flux(cls, A, out, edges=None):
        """Chain with symmetric flux matrix ``A`` and outside flux ``out`` (toy problems)."""
        A = np.asarray(A, dtype=float)
        out = np.asarray(out, dtype=float)
        if not np.allclose(A, A.T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
            raise ValueError("flux matrix must be symmetric")
        m = A.sum(axis=1) + out
        P = np.column_stack([A / m[:, None], out / m])
        edges = np.arange(A.shape[0] + 1, dtype=float) if edges is None else np.asarray(edges)
        return cls(edges, P, m)

    def cells_in(self, lo: float, hi: float):
        """Indices of cells contained in ``[lo, hi]``."""
        e = self.cell_edges
        return np.flatnonzero((e[:-1] >= lo - 1e-12) & (e[1:] <= hi * (1 + 1e-12)))


class Membership(str, Enum):
    DOMINATOR = "G_nu(C) dominator"
    GENERIC = "generic"


@dataclass
class TestFunction:
    """Bounded nonnegative test function on the half-line, or per-cell values."""

    __test__ = False  # not a pytest class

    values: Callable | np.ndarray
    membership: Membership = Membership.GENERIC

    def on(self, chain: DiscretizedChain):
        if callable(self.values):
            pts = chain.centers if chain.centers is not None else 0.5 * (chain.cell_edges[:-1] + chain.cell_edges[1:])
            h = np.asarray(self.values(pts), dtype=float)
        else:
            h = np.asarray(self.values, dtype=float)
        if h.shape != (chain.n_cells,) or not np.all(np.isfinite(h)):
            raise ValueError("test function must be finite on every cell")
        return h


@dataclass
class CapacityResult:
    truncation_B: float
    value: float
    minimizer: np.ndarray
    normalized: float = float("nan")
    n_cells: int = 0
    correction_norm: float = 0.0
    D_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


# ---------------------------------------------------------------------------

def log_cell_edges(B: float, n_cells: int, h0: float = 1e-2, anchors=()):
    """``[0] + geomspace(h0, B)`` with ``anchors`` inserted, ``n_cells`` cells in all."""
    anchors = sorted({float(a) for a in anchors if h0 < a < B})
    geo = np.geomspace(h0, B, n_cells - len(anchors))
    edges = np.unique(np.concatenate([[0.0], geo, anchors]))
    return edges


def _cell_rule(edges, q):
    lo, hi = edges[:-1], edges[1:]
    x, w = sqrt_panels(np.sqrt(lo), np.sqrt(hi), 1, order=q)
    return x, w


def discretize(kernel: TransitionKernel, B: float, n_cells: int,
               quad: QuadratureSpec = DEFAULT_QUAD, h0: float = 1e-2, anchors=(),
               max_correction: float = 0.01, row_tol: float = 1e-8) -> DiscretizedChain:
    """Cell-to-cell transition probabilities from each cell's mass-weighted centre.

    Each row integrates ``K(. | centre)`` over every cell with a per-cell
    Gauss-Legendre rule in ``sqrt(beta)`` (3 points, doubled until the row
    sums, including an independently integrated outside mass, are within
    ``row_tol`` of 1).  The mass-weighted matrix is then symmetrised; a
    relative correction above ``max_correction`` is an error.
    """
    if n_cells < 8:
        raise ValueError("n_cells must be >= 8")
    if kernel.state_space != "half_line":
        raise ValueError("discretize needs a half-line kernel")
    edges = log_cell_edges(B, n_cells, h0, anchors)
    xm, wm = _cell_rule(edges, 8)
    dens = kernel.sym_measure_density(xm)
    masses = np.sum(wm * dens, axis=1)
    centers = np.sum(wm * dens * xm, axis=1) / masses

    # outside mass integrated on its own, from B to far beyond the largest centre
    v_far = np.sqrt(max(B, centers.max())) + 2.0 * kernel.window_halfwidth
    xo, wo = sqrt_panels(np.sqrt(B), v_far, int(np.ceil((v_far - np.sqrt(B)) / 0.5)), order=12)
    out = wo[0] @ kernel.matrix(xo[0], centers)

    for q in (3, 6, 12, 24):
        x, w = _cell_rule(edges, q)
        K = kernel.matrix(x.ravel(), centers)              # (n*q, n)
        P = (w.ravel()[:, None] * K).reshape(len(masses), q, len(masses)).sum(axis=1).T
        drift = np.abs(P.sum(axis=1) + out - 1.0)
        if np.max(drift) <= row_tol:
            break
    else:
        raise DiscretizationError(f"row sums off by {np.max(drift):.3e} after refinement")
    # absorb the (tiny) residual into the outside cell so rows are stochastic
    out_col = 1.0 - P.sum(axis=1)
    T = np.column_stack([P, np.maximum(out_col, 0.0)])
    A = masses[:, None] * P
    corr = 0.5 * np.linalg.norm(A - A.T) / np.linalg.norm(A)
    if corr > max_correction:
        raise DiscretizationError(f"symmetrisation correction {corr:.3e} exceeds {max_correction}")
    return DiscretizedChain(edges, T, masses, centers, float(corr))


def _as_values(h, chain):
    if isinstance(h, TestFunction):
        return h.on(chain)
    h = np.asarray(h, dtype=float)
    if h.shape != (chain.n_cells,):
        raise ValueError("need one value per cell")
    return h


def dirichlet_form(h, chain: DiscretizedChain) -> float:
    """Discrete Dirichlet form with ``h = 0`` on the outside cell."""
    h = _as_values(h, chain)
    A, out = chain.flux
    diff = h[:, None] - h[None, :]
    return float(0.5 * np.sum(A * diff * diff) + np.sum(out * h * h))


def _laplacian(chain):
    A, out = chain.flux
    L = -A.copy()
    np.fill_diagonal(L, 0.0)
    L[np.diag_indices_from(L)] = A.sum(axis=1) - np.diag(A) + out
    return L


def capacity(chain: DiscretizedChain, D, B: float | None = None) -> CapacityResult:
    """Minimum of the Dirichlet form over ``h`` with ``h = 1`` on cells ``D``.

    The minimiser is harmonic off ``D`` and the outside cell; it is found by
    one linear solve.  Values outside ``[0, 1]`` by more than ``1e-10``
    (a maximum-principle violation) raise :class:`CapacityError`.
    """
    D = np.unique(np.asarray(D, dtype=int))
    if D.size == 0:
        raise ValueError("D must be nonempty")
    n = chain.n_cells
    L = _laplacian(chain)
    free = np.setdiff1d(np.arange(n), D)
    h = np.zeros(n)
    h[D] = 1.0
    if free.size:
        rhs = -L[np.ix_(free, D)].sum(axis=1)
        try:
            h[free] = linalg.solve(L[np.ix_(free, free)], rhs, assume_a="sym")
        except (linalg.LinAlgError, ValueError) as exc:
            raise CapacityError(f"singular system (disconnected cells?): {exc}") from exc
        if not np.all(np.isfinite(h)):
            raise CapacityError("singular system (disconnected cells?)")
    if h.min() < -1e-10 or h.max() > 1.0 + 1e-10:
        raise CapacityError(f"maximum principle violated: range [{h.min()}, {h.max()}]")
    value = float(h @ L @ h)
    mass_D = float(chain.cell_masses[D].sum())
    Bv = float(chain.cell_edges[-1]) if B is None else float(B)
    return CapacityResult(Bv, value, np.clip(h, 0.0, 1.0), value / mass_D, n,
                          chain.correction_norm, D)


def capacity_sequence(kernel: TransitionKernel, D=(0.0, 10.0), B_list=(30.0, 100.0, 300.0, 1000.0),
                      n_cells: int = 256, quad: QuadratureSpec = DEFAULT_QUAD, **kw):
    """Capacities of the interval ``D`` for growing truncations ``B``."""
    B_list = [float(b) for b in B_list]
    if any(b2 <= b1 for b1, b2 in zip(B_list, B_list[1:])):
        raise ValueError("B_list must be increasing")
    out = []
    for B in B_list:
        chain = discretize(kernel, B, n_cells, quad, anchors=(D[1],), **kw)
        out.append(capacity(chain, chain.cells_in(*D), B))
    return out


def ird_upper_bound(g, kernel_T: TransitionKernel | None, M_phi: float,
                    chain: DiscretizedChain) -> float:
    """``2 M_phi Delta(sqrt(g))`` on a chain discretised from the weighted kernel.

    ``kernel_T`` is kept for provenance only; the chain already carries its
    transitions and masses.
    """
    gv = _as_values(g, chain)
    if np.any(gv < 0):
        raise ValueError("g must be nonnegative")
    return 2.0 * M_phi * dirichlet_form(np.sqrt(gv), chain)


def write_capacity_csv(results, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["B", "n_cells", "capacity", "correction_norm", "normalized"])
        for r in results:
            wr.writerow([f"{r.truncation_B:.17g}", r.n_cells, f"{r.value:.17g}",
                         f"{r.correction_norm:.17g}", f"{r.normalized:.17g}"])


__all__ = ["DiscretizedChain", "TestFunction", "Membership", "CapacityResult",
           "DiscretizationError", "CapacityError", "log_cell_edges", "discretize",
           "dirichlet_form", "capacity", "capacity_sequence", "ird_upper_bound",
           "write_capacity_csv"]
