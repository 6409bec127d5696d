"""Logarithmic capacity of a polygon by a first-kind boundary integral equation.

The equilibrium density ``sigma`` (total mass 1) satisfies

    int log|x - y| sigma(y) ds(y) = gamma    for x on the boundary,

and the logarithmic capacity is ``exp(gamma)``.  The harmonic potential
``u = int log|x - y| sigma(y) ds(y) - gamma`` vanishes on the polygon and grows
like ``log|x| - gamma``, with ``|grad u| = 2 pi sigma`` on the boundary.

The density is piecewise constant on panels graded toward the vertices and
the equation is collocated at panel midpoints with exact panel integrals of
the logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .config import SolverConfig
from .geometry import ConvexPolygon

COND_MAX = 1e14
MAX_PANELS = 4096


class IllConditioned(RuntimeError):
    pass


def panel_fractions(n: int, beta: float) -> np.ndarray:
    """Panel breakpoints in ``[0, 1]``, graded toward both ends.

    Panel size near an end scales like ``dist^beta`` (``beta = 1`` gives a
    geometric-like ``x = s^(1/(1-beta))`` limit clipped to power 4).
    """
    power = min(1.0 / max(1.0 - beta, 1e-12), 4.0)
    s = np.linspace(0.0, 1.0, n + 1)
    left = 0.5 * (2.0 * s) ** power
    right = 1.0 - 0.5 * (2.0 * (1.0 - s)) ** power
    return np.where(s <= 0.5, left, right)


def log_panel_integrals(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``int_{[a_k, b_k]} log|x_i - y| ds(y)`` for all points ``x_i`` and segments ``k``."""
    d = b - a
    ell = np.linalg.norm(d, axis=1)
    tau = d / ell[:, None]
    rel = x[:, None, :] - a[None, :, :]
    s0 = np.einsum("ikd,kd->ik", rel, tau)
    n0 = rel[..., 0] * tau[None, :, 1] - rel[..., 1] * tau[None, :, 0]

    def F(u):
        r2 = u * u + n0 * n0
        with np.errstate(divide="ignore", invalid="ignore"):
            logterm = np.where(r2 > 0, u * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
            atan = np.where(n0 != 0, n0 * np.arctan(u / np.where(n0 != 0, n0, 1.0)), 0.0)
        return 0.5 * logterm - u + atan

    return F(ell[None, :] - s0) - F(-s0)


@dataclass(frozen=True)
class BemSolution:
    """Panel geometry and density of the equilibrium measure."""

    starts: np.ndarray  # panel start points
    ends: np.ndarray
    edge: np.ndarray  # owning edge index per panel
    sigma: np.ndarray  # density per unit length
    robin_constant: float

    @property
    def capacity(self) -> float:
        return math.exp(self.robin_constant)

    @property
    def boundary_gradient(self) -> np.ndarray:
        """``|grad u|`` at panel midpoints."""
        return 2.0 * math.pi * self.sigma

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.starts + self.ends)

    def edge_integrals(self, power: float) -> np.ndarray:
        """``int_edge |grad u|^power`` per edge (midpoint rule on panels)."""
        vals = self.boundary_gradient**power * self.lengths
        return np.bincount(self.edge, weights=vals, minlength=int(self.edge.max()) + 1)


def solve_harmonic_bem(P: ConvexPolygon, cfg: SolverConfig | None = None) -> BemSolution:
    """Equilibrium density and Robin constant of ``P``.

    ``cfg.panels`` panels per edge (reduced when the total would exceed
    4096), graded toward the vertices with exponent ``cfg.grading``.

    Raises
    ------
    IllConditioned
        If the 1-norm condition estimate of the system exceeds ``1e14``.
    """
    cfg = cfg or SolverConfig()
    per_edge = max(4, min(cfg.panels, MAX_PANELS // P.m))
    f = panel_fractions(per_edge, cfg.grading)
    v = P.vertices
    w = np.roll(v, -1, axis=0)
    starts = (v[:, None, :] + f[None, :-1, None] * (w - v)[:, None, :]).reshape(-1, 2)
    ends = (v[:, None, :] + f[None, 1:, None] * (w - v)[:, None, :]).reshape(-1, 2)
    edge = np.repeat(np.arange(P.m), per_edge)
    # work relative to the centroid so the matrix does not see large offsets
    c = P.metrics().centroid
    starts, ends = starts - c, ends - c
    mids = 0.5 * (starts + ends)
    n = len(mids)
    A = np.empty((n + 1, n + 1))
    A[:n, :n] = log_panel_integrals(mids, starts, ends)
    A[:n, n] = -1.0
    A[n, :n] = np.linalg.norm(ends - starts, axis=1)
    A[n, n] = 0.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    lu, piv = sla.lu_factor(A)
    anorm = np.abs(A).sum(axis=0).max()
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0 or 1.0 / rcond > COND_MAX:
        raise IllConditioned(f"panel system condition estimate {1.0 / max(rcond, 1e-300):.3e}")
    sol = sla.lu_solve((lu, piv), rhs)
    return BemSolution(starts + c, ends + c, edge, sol[:n], float(sol[n]))
