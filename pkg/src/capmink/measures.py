"""Finite atomic measures on the unit circle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .geometry import TOL_ANGLE, TWO_PI, Direction, unit_vectors, wrap_angle

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TOL_CENTROID_REL = 1e-10
WEIGHT_FLOOR_REL = 1e-8
EQUATOR_GRID = 720


class MeasureError(ValueError):
    pass


class EmptyMeasure(MeasureError):
    pass


class InfeasibleProjection(MeasureError):
    pass


class NonpositiveDensity(MeasureError):
    pass


@dataclass(frozen=True, eq=False)
class SurfaceMeasure:
    """Atoms ``weight * delta_theta``, sorted by angle, weights > 0."""

    theta: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_atoms(cls, theta, weights) -> SurfaceMeasure:
        theta = wrap_angle(np.atleast_1d(np.asarray(theta, dtype=float)))
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if theta.shape != w.shape:
            raise MeasureError("theta and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise MeasureError("weights must be finite and nonnegative")
        keep = w > 0
        theta, w = theta[keep], w[keep]
        order = np.argsort(theta, kind="stable")
        theta, w = theta[order], w[order]
        if len(theta) == 0:
            return cls(theta, w)
        mt, mw = [theta[0]], [w[0]]
        for t, x in zip(theta[1:], w[1:]):
            if t - mt[-1] < TOL_ANGLE:
                mw[-1] += x
            else:
                mt.append(t)
                mw.append(x)
        if len(mt) > 1 and mt[0] + TWO_PI - mt[-1] < TOL_ANGLE:
            mw[0] += mw.pop()
            mt.pop()
        return cls(np.array(mt), np.array(mw))

    @property
    def directions(self) -> list[Direction]:
        return [Direction(t) for t in self.theta]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def centroid_vector(self) -> np.ndarray:
        return self.weights @ unit_vectors(self.theta)

    def __len__(self) -> int:
        return len(self.theta)

    def scaled(self, s: float) -> SurfaceMeasure:
        return SurfaceMeasure(self.theta.copy(), s * self.weights)

    def to_dict(self) -> dict:
        return {"atoms": [{"theta_rad": float(t), "weight": float(w)} for t, w in zip(self.theta, self.weights)]}

    @classmethod
    def from_dict(cls, data: dict) -> SurfaceMeasure:
        atoms = data["atoms"]
        keys = {k for a in atoms for k in a if k != "weight"}
        if keys == {"theta_rad"}:
            theta = [a["theta_rad"] for a in atoms]
        elif keys == {"theta_deg"}:
            theta = np.deg2rad([a["theta_deg"] for a in atoms])
        else:
            raise KeyError("atoms[].theta_rad (or theta_deg, not mixed)")
        return cls.from_atoms(theta, [a["weight"] for a in atoms])


@dataclass(frozen=True)
class AdmissibilityReport:
    centroid_residual: float
    has_antipodal_pair: bool
    antipodal_pairs: tuple
    equator_infimum: float
    supported_on_equator: bool
    admissible: bool
    total_mass: float

    def reason(self) -> str:
        if self.admissible:
            return "admissible"
        parts = []
        if self.centroid_residual > TOL_CENTROID_REL * self.total_mass:
            parts.append(f"centroid residual {self.centroid_residual:.3e} is not zero")
        if self.supported_on_equator:
            pair = ", ".join(f"({a}, {b})" for a, b in self.antipodal_pairs) or "none"
            parts.append(f"support lies on an equator (antipodal atom pairs: {pair})")
        return "; ".join(parts)


def validate_measure(mu: SurfaceMeasure, strict: bool = False) -> AdmissibilityReport:
    """Check the solvability conditions for prescribing ``mu``.

    ``admissible`` requires a zero centroid and that ``mu`` is not concentrated
    on a single antipodal pair ``{theta, theta + pi}``.  With ``strict=True``
    any antipodal pair of atoms is also rejected (the stronger condition used
    for the discrete construction).
    """
    if len(mu) == 0:
        raise EmptyMeasure("measure has no atoms")
    total = mu.total
    res = float(np.linalg.norm(mu.centroid_vector))
    pairs = []
    for i in range(len(mu)):
        for j in range(i + 1, len(mu)):
            if abs(wrap_angle(mu.theta[j] - mu.theta[i]) - math.pi) < TOL_ANGLE:
                pairs.append((i, j))
    grid = np.concatenate([mu.theta, np.linspace(0.0, TWO_PI, EQUATOR_GRID, endpoint=False)])
    # the infimum of a piecewise |cos| sum is attained where some atom is orthogonal
    grid = np.concatenate([grid, wrap_angle(mu.theta + math.pi / 2)])
    vals = np.abs(unit_vectors(grid) @ unit_vectors(mu.theta).T) @ mu.weights
    eq_inf = float(vals.min())
    on_equator = eq_inf <= 1e-12 * total
    balanced = res <= TOL_CENTROID_REL * total
    ok = balanced and not on_equator and not (strict and pairs)
    return AdmissibilityReport(res, bool(pairs), tuple(pairs), eq_inf, on_equator, ok, total)


def project_to_centroid_zero(mu: SurfaceMeasure, floor_rel: float = WEIGHT_FLOOR_REL) -> SurfaceMeasure:
    """Closest weights (least squares) with zero centroid and a positive floor.

    Solves ``min |c' - c|^2`` subject to ``sum c'_j zeta_j = 0`` and
    ``c'_j >= floor`` with a primal active-set loop.
    """
    if len(mu) == 0:
        raise EmptyMeasure("measure has no atoms")
    c = mu.weights
    Z = unit_vectors(mu.theta)  # m x 2
    floor = floor_rel * c.mean()
    m = len(c)
    active = np.zeros(m, dtype=bool)
    x = c.copy()
    for _ in range(4 * m + 10):
        free = ~active
        Zf = Z[free]
        rhs = Z[active].T @ np.full(active.sum(), floor) + Zf.T @ c[free]
        G = Zf.T @ Zf
        if free.sum() < 2 or np.linalg.cond(G) > 1e12:
            raise InfeasibleProjection("no positive zero-centroid weights near the input")
        lam = np.linalg.solve(G, rhs)
        x = np.where(active, floor, c - Z @ lam)
        low = free & (x < floor)
        if low.any():
            active |= low
            continue
        # multipliers of active bounds: x - c + Z lam - nu = 0
        nu = floor - c + Z @ lam
        release = active & (nu < -1e-14 * c.mean())
        if release.any():
            active[np.argmin(np.where(release, nu, np.inf))] = False
            continue
        break
    else:
        raise InfeasibleProjection("active-set loop did not settle")
    if np.linalg.norm(x @ Z) > 1e-12 * x.sum() or np.any(x < floor * (1 - 1e-12)):
        raise InfeasibleProjection("no positive zero-centroid weights near the input")
    return SurfaceMeasure(mu.theta.copy(), x)


def cell_centers(m: int) -> np.ndarray:
    """Atom directions used by :func:`discretize_density`."""
    if m < 3:
        raise ValueError("m must be at least 3")
    offset = 0.5 if m % 2 else GOLDEN
    return TWO_PI * (np.arange(m) + offset) / m


def _periodic_simpson(theta_s: np.ndarray, psi: np.ndarray, a: float, b: float, n: int = 64) -> float:
    """Composite Simpson on ``[a, b]`` of the periodic linear interpolant."""
    n += n % 2
    x = np.linspace(a, b, n + 1)
    period_t = np.concatenate([theta_s, [theta_s[0] + TWO_PI]])
    period_p = np.concatenate([psi, [psi[0]]])
    f = np.interp(wrap_angle(x), period_t, period_p)
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return float((b - a) / (3 * n) * (w @ f))


def cell_integrals(theta_s: np.ndarray, psi: np.ndarray, centers: np.ndarray, width: float | np.ndarray) -> np.ndarray:
    width = np.broadcast_to(width, centers.shape)
    return np.array([_periodic_simpson(theta_s, psi, c - w / 2, c + w / 2) for c, w in zip(centers, width)])


def discretize_density(theta_s, psi, m: int) -> SurfaceMeasure:
    """Atomic approximation of ``psi(theta) d theta`` with ``m`` equal cells.

    ``theta_s`` are uniform sample angles in ``[0, 2 pi)``.  Cell masses come
    from composite Simpson on the interpolated samples; the result is then
    projected to a zero centroid.
    """
    theta_s = np.asarray(theta_s, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.any(psi <= 0):
        raise NonpositiveDensity("density samples must be strictly positive")
    order = np.argsort(wrap_angle(theta_s))
    theta_s, psi = wrap_angle(theta_s)[order], psi[order]
    centers = cell_centers(m)
    w = cell_integrals(theta_s, psi, centers, TWO_PI / m)
    return project_to_centroid_zero(SurfaceMeasure.from_atoms(centers, w))


def weak_distance(mu1: SurfaceMeasure, mu2: SurfaceMeasure) -> float:
    """Bounded-Lipschitz distance on the circle between two atomic measures.

    ``sup { int f d(mu1 - mu2) : |f| <= 1, Lip(f) <= 1 }`` with the arc-length
    metric.  On the merged support the Lipschitz condition reduces to
    consecutive-point constraints, leaving a small linear program.
    """
    t = np.concatenate([mu1.theta, mu2.theta])
    w = np.concatenate([mu1.weights, -mu2.weights])
    order = np.argsort(t, kind="stable")
    t, w = t[order], w[order]
    # merge coincident points
    pts, ws = [t[0]], [w[0]]
    for ti, wi in zip(t[1:], w[1:]):
        if ti - pts[-1] < 1e-15:
            ws[-1] += wi
        else:
            pts.append(ti)
            ws.append(wi)
    pts, ws = np.array(pts), np.array(ws)
    n = len(pts)
    if n == 1:
        return float(abs(ws[0]))
    gaps = np.diff(np.concatenate([pts, [pts[0] + TWO_PI]]))
    rows, rhs = [], []
    for i in range(n):
        j = (i + 1) % n
        r = np.zeros(n)
        r[i], r[j] = 1.0, -1.0
        rows += [r, -r]
        rhs += [gaps[i], gaps[i]]
    res = linprog(-ws, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=[(-1.0, 1.0)] * n, method="highs")
    if not res.success:
        raise RuntimeError(f"weak_distance LP failed: {res.message}")
    return float(-res.fun)
