"""Planar convex polygons described by outer normals and support numbers.

A polygon is the intersection of half-planes ``{x : x . zeta_j <= h_j}`` with
``zeta_j = (cos theta_j, sin theta_j)``.  After construction only the active
half-planes are kept, ordered by angle, and vertex ``j`` is the start of edge
``j`` (the intersection of support lines ``j-1`` and ``j``), so the normal cone
at vertex ``j`` is the arc ``(theta_{j-1}, theta_j)``.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
TOL_ANGLE = 1e-9
TOL_LEN_REL = 1e-12


class GeometryError(ValueError):
    """Base class for polygon construction errors."""


class UnboundedBody(GeometryError):
    pass


class DegenerateBody(GeometryError):
    pass


class LengthMismatch(GeometryError):
    pass


class NonpositiveDilation(GeometryError):
    pass


def wrap_angle(theta):
    """Map angle(s) into ``[0, 2*pi)``."""
    t = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(t >= TWO_PI, t - TWO_PI, t) if isinstance(t, np.ndarray) else (0.0 if t >= TWO_PI else float(t))


def angular_gap(a: float, b: float) -> float:
    """Unsigned geodesic distance between two angles on the circle."""
    d = abs(wrap_angle(a) - wrap_angle(b))
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class Direction:
    """A point of the unit circle stored as an angle in ``[0, 2*pi)``."""

    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    def is_antipodal(self, other: Direction, tol: float = TOL_ANGLE) -> bool:
        d = wrap_angle(self.theta - other.theta)
        return abs(d - math.pi) < tol


def unit_vectors(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def half_circle_gap(theta: np.ndarray) -> float:
    """Largest circular gap between consecutive sorted angles."""
    t = np.sort(wrap_angle(np.asarray(theta, dtype=float)))
    gaps = np.diff(np.concatenate([t, [t[0] + TWO_PI]]))
    return float(gaps.max())


def line_intersections(theta: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Intersections of consecutive support lines ``j-1`` and ``j``.

    Row ``j`` of the result is the start vertex of edge ``j``.  No pruning is
    done; callers must pass an active, angle-sorted set.
    """
    t0 = np.roll(theta, 1)
    h0 = np.roll(h, 1)
    s = np.sin(theta - t0)
    # Cramer's rule for [cos t0, sin t0; cos t, sin t] x = [h0, h]
    x = (h0 * np.sin(theta) - h * np.sin(t0)) / s
    y = (h * np.cos(t0) - h0 * np.cos(theta)) / s
    return np.stack([x, y], axis=-1)


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Pruned half-plane representation of a convex polygon.

    Use :func:`polygon_from_support` to build one; the constructor does not
    validate its input.
    """

    theta: np.ndarray
    supports: np.ndarray
    vertices: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.theta)

    @property
    def normals(self) -> list[Direction]:
        return [Direction(t) for t in self.theta]

    @property
    def normal_vectors(self) -> np.ndarray:
        return unit_vectors(self.theta)

    @property
    def edge_vectors(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @property
    def turning_angles(self) -> np.ndarray:
        """Exterior (turning) angle at each vertex: ``theta_j - theta_{j-1}``."""
        return wrap_angle(self.theta - np.roll(self.theta, 1))

    def metrics(self) -> BodyMetrics:
        return body_metrics(self)

    def __repr__(self) -> str:
        return f"ConvexPolygon(m={self.m}, theta={np.round(self.theta, 6).tolist()}, supports={np.round(self.supports, 6).tolist()})"


def _active_mask(theta: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Lengths of each support line's segment inside every other half-plane."""
    z = unit_vectors(theta)
    tang = np.stack([-z[:, 1], z[:, 0]], axis=1)
    base = h[:, None] * z  # foot point of line j
    # constraint k on line j: s * (z_k . t_j) <= h_k - z_k . base_j
    a = tang @ z.T  # a[j, k] = t_j . z_k
    b = h[None, :] - base @ z.T  # b[j, k]
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(b, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = b / a
    upper = np.where(a > 1e-15, ratio, np.inf).min(axis=1)
    lower = np.where(a < -1e-15, ratio, -np.inf).max(axis=1)
    parallel_bad = ((np.abs(a) <= 1e-15) & (b < 0.0)).any(axis=1)
    length = upper - lower
    length[parallel_bad] = -np.inf
    return length


def polygon_from_support(normals: Iterable, supports: Sequence[float]) -> ConvexPolygon:
    """Build the convex polygon ``{x : x . zeta_j <= h_j}``.

    Parameters
    ----------
    normals : sequence of float angles or :class:`Direction`
        Outer normal directions.
    supports : sequence of float
        Support numbers, one per normal.

    Returns
    -------
    ConvexPolygon
        Active half-planes only, sorted by angle.

    Raises
    ------
    LengthMismatch, UnboundedBody, DegenerateBody
    """
    theta = np.array([n.theta if isinstance(n, Direction) else float(n) for n in normals], dtype=float)
    h = np.asarray(supports, dtype=float).copy()
    if theta.shape != h.shape:
        raise LengthMismatch(f"{len(theta)} normals but {len(h)} support numbers")
    if len(theta) < 3:
        raise UnboundedBody("at least three normals are needed for a bounded body")
    if not np.all(np.isfinite(h)):
        raise DegenerateBody("support numbers must be finite")
    theta = wrap_angle(theta)
    order = np.argsort(theta, kind="stable")
    theta, h = theta[order], h[order]

    # merge coincident normals, keeping the tighter constraint
    keep_t, keep_h = [theta[0]], [h[0]]
    for t, s in zip(theta[1:], h[1:]):
        if t - keep_t[-1] < TOL_ANGLE:
            keep_h[-1] = min(keep_h[-1], s)
        else:
            keep_t.append(t)
            keep_h.append(s)
    if len(keep_t) > 1 and keep_t[0] + TWO_PI - keep_t[-1] < TOL_ANGLE:
        keep_h[0] = min(keep_h[0], keep_h.pop())
        keep_t.pop()
    theta, h = np.array(keep_t), np.array(keep_h)

    if len(theta) < 3 or half_circle_gap(theta) >= math.pi - TOL_ANGLE:
        raise UnboundedBody("normal directions lie in a closed half-circle")

    scale = max(float(np.abs(h).max()), 1e-300)
    length = _active_mask(theta, h)
    active = length > TOL_LEN_REL * scale
    if active.sum() < 3:
        raise DegenerateBody("half-plane intersection has empty interior")
    theta, h = theta[active], h[active]
    if half_circle_gap(theta) >= math.pi - TOL_ANGLE:
        raise DegenerateBody("half-plane intersection has empty interior")
    vertices = line_intersections(theta, h)
    poly = ConvexPolygon(theta, h, vertices)
    if body_metrics(poly).area <= 0.0:
        raise DegenerateBody("half-plane intersection has empty interior")
    return poly


def support_function(P: ConvexPolygon, d) -> float | np.ndarray:
    """``h_P(theta) = max_v v . (cos theta, sin theta)``; vectorized over angles."""
    theta = d.theta if isinstance(d, Direction) else d
    u = unit_vectors(theta)
    vals = u @ P.vertices.T
    return vals.max(axis=-1)


@dataclass(frozen=True)
class GaussPreimage:
    kind: str  # "edge" or "vertex"
    index: int
    point: np.ndarray | None = None


def gauss_preimage(P: ConvexPolygon, d) -> GaussPreimage:
    """Edge with normal ``d`` or the vertex whose normal cone contains ``d``."""
    theta = d.theta if isinstance(d, Direction) else wrap_angle(float(d))
    diffs = np.array([angular_gap(theta, t) for t in P.theta])
    j = int(np.argmin(diffs))
    if diffs[j] < TOL_ANGLE:
        return GaussPreimage("edge", j)
    # vertex j has cone (theta_{j-1}, theta_j); find first normal after theta
    k = int(np.searchsorted(P.theta, theta)) % P.m
    return GaussPreimage("vertex", k, P.vertices[k].copy())


@dataclass(frozen=True)
class BodyMetrics:
    area: float
    perimeter: float
    diameter: float
    centroid: np.ndarray


def body_metrics(P: ConvexPolygon) -> BodyMetrics:
    v = P.vertices
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    area = 0.5 * cross.sum()
    # shift to reduce cancellation in the centroid sum
    ref = v.mean(axis=0)
    vr, wr = v - ref, w - ref
    cr = vr[:, 0] * wr[:, 1] - wr[:, 0] * vr[:, 1]
    cen = ref + ((vr + wr) * cr[:, None]).sum(axis=0) / (6.0 * 0.5 * cr.sum())
    per = float(np.linalg.norm(w - v, axis=1).sum())
    dv = v[:, None, :] - v[None, :, :]
    diam = float(np.sqrt((dv**2).sum(-1)).max())
    return BodyMetrics(float(area), per, diam, cen)


def hausdorff_distance(P: ConvexPolygon, Q: ConvexPolygon) -> float:
    """Sup-norm distance between support functions, exact for polygons.

    Between consecutive breakpoints (the merged normal sets) each support
    function is attained by a fixed vertex, so the difference is ``w . u(theta)``
    and its maximum on the arc is found in closed form.
    """
    bp = np.unique(np.concatenate([P.theta, Q.theta]))
    lo = bp
    hi = np.concatenate([bp[1:], [bp[0] + TWO_PI]])
    mid = 0.5 * (lo + hi)
    um = unit_vectors(mid)
    vp = P.vertices[np.argmax(um @ P.vertices.T, axis=1)]
    vq = Q.vertices[np.argmax(um @ Q.vertices.T, axis=1)]
    w = vp - vq
    best = 0.0
    for a, b, wi in zip(lo, hi, w):
        vals = [abs(wi @ unit_vectors(a)), abs(wi @ unit_vectors(b))]
        nrm = float(np.hypot(*wi))
        if nrm > 0:
            phi = math.atan2(wi[1], wi[0])
            for c in (phi, phi + math.pi):
                if wrap_angle(c - a) <= b - a:
                    vals.append(nrm)
        best = max(best, max(vals))
    return float(best)


def transform(P: ConvexPolygon, translation=(0.0, 0.0), dilation: float = 1.0) -> ConvexPolygon:
    """Image of ``P`` under ``x -> dilation * x + translation``."""
    if not dilation > 0:
        raise NonpositiveDilation(f"dilation must be positive, got {dilation}")
    x0 = np.asarray(translation, dtype=float)
    h = dilation * P.supports + P.normal_vectors @ x0
    return ConvexPolygon(P.theta.copy(), h, dilation * P.vertices + x0)


def centered(P: ConvexPolygon) -> ConvexPolygon:
    """Translate so that the area centroid sits at the origin."""
    return transform(P, -body_metrics(P).centroid, 1.0)


def regular_polygon(m: int, inradius: float = 1.0, phase: float = 0.0, center=(0.0, 0.0)) -> ConvexPolygon:
    theta = phase + TWO_PI * np.arange(m) / m
    P = polygon_from_support(theta, np.full(m, float(inradius)))
    return transform(P, center, 1.0)


def rectangle(width: float, height: float, center=(0.0, 0.0)) -> ConvexPolygon:
    theta = np.array([0.0, 0.5, 1.0, 1.5]) * math.pi
    h = np.array([width, height, width, height]) / 2.0
    return transform(polygon_from_support(theta, h), center, 1.0)


# -- JSON -----------------------------------------------------------------


def polygon_to_dict(P: ConvexPolygon) -> dict:
    return {
        "normals_theta_rad": [float(t) for t in P.theta],
        "supports": [float(s) for s in P.supports],
        "vertices": [[float(x), float(y)] for x, y in P.vertices],
    }


def polygon_from_dict(data: dict, vertex_tol: float = 1e-9) -> ConvexPolygon:
    """Load a polygon, re-deriving vertices and checking any stored ones."""
    if "normals_theta_rad" in data:
        theta = np.asarray(data["normals_theta_rad"], dtype=float)
    elif "normals_theta_deg" in data:
        theta = np.deg2rad(np.asarray(data["normals_theta_deg"], dtype=float))
    else:
        raise KeyError("normals_theta_rad")
    if "supports" not in data:
        raise KeyError("supports")
    P = polygon_from_support(theta, data["supports"])
    stored = data.get("vertices")
    if stored is not None:
        stored = np.asarray(stored, dtype=float)
        if stored.shape != P.vertices.shape:
            raise GeometryError(
                f"vertices: stored {stored.shape[0]} vertices, support data gives {P.m}"
            )
        scale = max(1.0, float(np.abs(P.vertices).max()))
        err = float(np.abs(stored - P.vertices).max())
        if err > vertex_tol * scale:
            raise GeometryError(f"vertices: stored vertices disagree with support data by {err:.3e}")
    return P
