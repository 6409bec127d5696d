"""Structured exterior meshes around a convex polygon.

Layer 0 is the polygon boundary.  Layer ``l`` is the parallel curve at offset
``d_l``: translated copies of the edges joined by circular arcs at the
vertices (or by miter points where the corner is nearly flat).  Far from the
body the layers are blended onto circles about the area centroid; the last
layer is a circle of radius about ``truncation_factor * diam``.  Consecutive
layers are stitched into triangles; at layer 0 each arc collapses onto its
vertex and becomes a fan.  Away from the first layers, nodes whose neighbours
are much closer than the layer spacing are dropped, so outer rings are coarser
than inner ones.

Boundary nodes are graded geometrically toward sharp vertices.  The
connectivity depends only on a :class:`MeshLayout`, so for a fixed layout the
node coordinates are a smooth function of the support numbers.  Interior edge
nodes of layers 1..3 lie on the outward normal through the matching boundary
node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .config import SolverConfig
from .geometry import (
    ConvexPolygon,
    body_metrics,
    line_intersections,
    unit_vectors,
    wrap_angle,
)

FLAT_TURN = 0.35  # rad; below this a vertex gets a miter join and no grading
BLEND_START_REL = 1.0
Q_MAX = 0.1
CORNER_REL = 5e-4  # first graded node at this fraction of the adjacent edge length
RATIO_MAX = 0.5
KEEP_LAYERS = 3  # layers with the full node set (used by boundary traces)
COARSEN = 1.5  # drop a node when its neighbours are closer than this many layer spacings
RING_MIN = 48
NEAR_REL = 1.0  # extent of the near zone in mean widths


class MeshFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MeshLayout:
    """Topology of an exterior mesh; independent of the support numbers.

    Edge ``j`` has ``n_edge[j] = geo[j][0] + geo[j][1] + n_mid`` boundary
    segments: ``geo`` counts the geometrically graded nodes at its start and
    end corner (zero at nearly flat corners), the rest are uniform.  Sharp
    vertices carry ``n_arc`` arc segments.  ``life[i]`` is the last layer that
    contains tangential node ``i``.  All float fields are quantized so that
    nearby polygons share a layout.
    """

    theta: np.ndarray
    n_edge: tuple
    n_arc: tuple
    geo: tuple
    ratio: float  # growth ratio of the corner grading
    corner_rel: float
    h0_rel: float  # first layer offset / mean width
    rout_rel: float  # outer radius / mean width
    q_near: float  # layer growth ratio up to about one mean width from the body
    n_near: int
    layers: int
    life: tuple

    @property
    def m(self) -> int:
        return len(self.theta)

    @cached_property
    def _key(self) -> tuple:
        return (
            tuple(np.round(self.theta, 12)),
            self.n_edge,
            self.n_arc,
            self.geo,
            self.ratio,
            self.corner_rel,
            self.h0_rel,
            self.rout_rel,
            self.q_near,
            self.n_near,
            self.layers,
            self.life,
        )

    def key(self) -> tuple:
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, MeshLayout) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    @property
    def n_tangential(self) -> int:
        return int(sum(self.n_edge) + sum(self.n_arc))

    @property
    def ring_sizes(self) -> np.ndarray:
        """Node count of layers ``1..L``."""
        life = np.array(self.life)
        return np.array([(life >= l).sum() for l in range(1, self.layers + 1)])

    @property
    def n_triangles(self) -> int:
        n = self.ring_sizes
        return int(2 * sum(self.n_edge) + sum(self.n_arc) + (n[:-1] + n[1:]).sum())


def corner_scales(lengths: np.ndarray, corner_rel: float) -> np.ndarray:
    """First graded node distance at each vertex: a smooth minimum of the two adjacent edge lengths."""
    prev = np.roll(lengths, 1)
    return corner_rel * (prev**-4 + lengths**-4) ** -0.25


def edge_positions(ell: float, x_start: float, x_end: float, g_start: int, g_end: int, n_mid: int, ratio: float) -> np.ndarray:
    """Node distances from the start vertex, ``0`` included and ``ell`` excluded."""
    gs = x_start * ratio ** np.arange(g_start)
    ge = x_end * ratio ** np.arange(g_end)
    a = gs[-1] if g_start else 0.0
    b = ell - ge[-1] if g_end else ell
    mid = a + (b - a) * np.arange(1, n_mid) / n_mid
    return np.concatenate([[0.0], gs, mid, ell - ge[::-1]])


def _quantize(x: float, steps: int = 4) -> float:
    return float(2.0 ** (round(steps * math.log2(x)) / steps))


def _layer_count(h0: float, d_max: float, q: float) -> int:
    return int(math.ceil(math.log1p(d_max * (q - 1.0) / h0) / math.log(q)))


def _growth_ratio(h0: float, L: int, d_max: float) -> float:
    """Solve ``h0 (q^L - 1) / (q - 1) = d_max`` for ``q > 1`` by Newton on ``log q``."""
    if d_max <= h0 * L:
        raise MeshFailure("outer radius too small for the layer count")
    x = math.log(max(1.0 + 1e-6, (d_max / h0) ** (1.0 / L)))
    for _ in range(100):
        q = math.exp(x)
        qm = math.expm1(x)
        qL = math.expm1(L * x)
        f = math.log(h0 * qL / qm) - math.log(d_max)
        df = L * math.exp(L * x) / qL - q / qm
        step = f / df
        x -= step
        if abs(step) < 1e-16 * max(1.0, abs(x)):
            break
    return math.exp(x)


def _layer_offsets(h0: float, q_near: float, n_near: int, L: int, d_max: float) -> np.ndarray:
    """Offsets growing by ``q_near`` for ``n_near`` layers, then by the ratio that ends at ``d_max``."""
    d = h0 * np.expm1(np.arange(n_near + 1) * math.log(q_near)) / (q_near - 1.0)
    g = h0 * q_near**n_near
    q = _growth_ratio(g, L - n_near, d_max - d[-1])
    far = d[-1] + g * np.expm1(np.arange(1, L - n_near + 1) * math.log(q)) / (q - 1.0)
    far[-1] = d_max
    return np.concatenate([d, far])


@dataclass(frozen=True)
class _Shape:
    """Polygon quantities needed to place nodes."""

    v: np.ndarray
    w: np.ndarray
    lengths: np.ndarray
    centroid: np.ndarray
    perimeter: float


def _shape(theta: np.ndarray, supports: np.ndarray) -> _Shape:
    v = line_intersections(theta, supports)
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    area = 0.5 * cross.sum()
    if not area > 0:
        raise MeshFailure("polygon has no interior")
    c = ((v + w) * cross[:, None]).sum(axis=0) / (6.0 * area)
    elen = np.linalg.norm(w - v, axis=1)
    return _Shape(v, w, elen, c, float(elen.sum()))


def _edge_fractions(sh: _Shape, n_edge, geo, ratio: float, corner_rel: float) -> list:
    m = len(n_edge)
    x0 = corner_scales(sh.lengths, corner_rel)
    fracs = []
    for j in range(m):
        g0, g1 = geo[j]
        x = edge_positions(sh.lengths[j], x0[j], x0[(j + 1) % m], g0, g1, n_edge[j] - g0 - g1, ratio)
        f = x / sh.lengths[j]
        if not np.all(np.diff(np.append(f, 1.0)) > 0):
            raise MeshFailure("edge grading does not fit on an edge")
        fracs.append(f)
    return fracs


def _raw_rings(theta: np.ndarray, sh: _Shape, n_edge, n_arc, fracs, d: np.ndarray) -> np.ndarray:
    """Parallel-curve nodes of every layer, shape ``(len(d), n_tangential, 2)``."""
    m = len(theta)
    na = np.array(n_arc)
    z = unit_vectors(theta)
    zp = np.roll(z, 1, axis=0)
    # start direction of edge j's offset: arc end (zeta_j) or miter point
    miter = (zp + z) / (1.0 + np.sum(zp * z, axis=1))[:, None]
    start_dir = np.where((na > 0)[:, None], z, miter)
    end_dir = np.roll(np.where((na > 0)[:, None], zp, miter), -1, axis=0)
    turn = wrap_angle(theta - np.roll(theta, 1))
    dl = d[:, None, None]
    rings = np.empty((len(d), int(sum(n_edge) + na.sum()), 2))
    pos = 0
    for j in range(m):
        if na[j] > 0:
            phi = theta[j - 1] + turn[j] * np.arange(na[j]) / na[j]
            rings[:, pos : pos + na[j]] = sh.v[j] + dl * unit_vectors(phi)[None]
            pos += na[j]
        f = fracs[j]
        a = sh.v[j] + dl * start_dir[j]
        b = sh.w[j] + dl * end_dir[j]
        rings[:, pos : pos + n_edge[j]] = a + f[None, :, None] * (b - a)
        pos += n_edge[j]
    return rings


def _plan_life(rings: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Last layer of each tangential node.

    From layer ``KEEP_LAYERS + 1`` on, every other node whose two neighbours
    are closer than ``COARSEN`` layer spacings is dropped, so each removed
    node sits between two kept ones.
    """
    L, nt = rings.shape[0], rings.shape[1]
    life = np.full(nt, L)
    kept = np.arange(nt)
    for l in range(KEEP_LAYERS + 1, L + 1):
        n = len(kept)
        if n <= RING_MIN:
            break
        pts = rings[l - 1, kept]
        gap = np.linalg.norm(np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0), axis=1)
        cand = gap < COARSEN * (d[l] - d[l - 1])
        cand &= np.arange(n) % 2 == 0
        if n % 2:
            cand[-1] = False
        excess = n - RING_MIN
        if cand.sum() > excess:
            cand[np.flatnonzero(cand)[excess:]] = False
        life[kept[cand]] = l - 1
        kept = kept[~cand]
    return life


def _make_layout(P: ConvexPolygon, cfg: SolverConfig, K: float) -> MeshLayout:
    met = body_metrics(P)
    per, diam = met.perimeter, met.diameter
    S = per / math.pi
    m = P.m
    turn = P.turning_angles  # at vertex j, between edge j-1 and j
    lengths = P.edge_lengths
    flat = turn <= FLAT_TURN
    dphi = math.pi / K
    ratio = 1.0 + _quantize(min(dphi, RATIO_MAX), 8)
    n_arc = np.where(flat, 0, np.maximum(1, np.rint(turn / dphi))).astype(int)
    h_t = per / (4.0 * K)
    x0 = corner_scales(lengths, CORNER_REL)
    lr = math.log(ratio)

    def graded(v, ell):
        if flat[v]:
            return 0
        full = 1 + math.ceil(math.log(max(h_t / ((ratio - 1.0) * x0[v]), 1.0)) / lr)
        cap = 1 + math.floor(math.log(0.4 * ell / x0[v]) / lr)
        return max(1, min(full, cap))

    n_edge, geo = [], []
    for j in range(m):
        jn = (j + 1) % m
        ell = lengths[j]
        g0, g1 = graded(j, ell), graded(jn, ell)
        xs = x0[j] * ratio ** (g0 - 1) if g0 else 0.0
        xe = x0[jn] * ratio ** (g1 - 1) if g1 else 0.0
        spacing = min([h_t] + [x * (ratio - 1.0) for x in (xs, xe) if x > 0])
        n_mid = max(2 if not (g0 or g1) else 1, math.ceil((ell - xs - xe) / spacing))
        n_edge.append(g0 + g1 + n_mid)
        geo.append((g0, g1))
    n_edge = tuple(int(n) for n in n_edge)
    n_arc = tuple(int(n) for n in n_arc)
    geo = tuple(geo)
    sharp = ~flat
    h0 = float(x0[sharp].min()) if sharp.any() else min(lengths[j] / n_edge[j] for j in range(m))
    # far-field angular spacing sets the geometric growth of the layer offsets
    spans = [turn[j] / n_arc[j] for j in range(m) if n_arc[j] > 0]
    far = max(spans) if spans else 2.0 * math.pi / sum(n_edge)
    q = 1.0 + min(max(far, dphi, 0.02), Q_MAX)
    # near the body the layers may grow as fast as the corner grading
    q_near = max(ratio, q)
    rout_rel = _quantize(cfg.truncation_factor * diam / S, 32)
    d_max = rout_rel * S - per / (2.0 * math.pi)
    h0_rel = _quantize(h0 / S)
    n_near = _layer_count(h0_rel, NEAR_REL, q_near)
    d_near = h0_rel * S * (q_near**n_near - 1.0) / (q_near - 1.0)
    g = h0_rel * S * q_near**n_near
    n_far = max(4, _layer_count(g, d_max - d_near, q))
    L = n_near + n_far
    sh = _shape(P.theta, P.supports)
    fracs = _edge_fractions(sh, n_edge, geo, ratio, CORNER_REL)
    d = _layer_offsets(h0_rel * S, q_near, n_near, L, d_max)
    life = _plan_life(_raw_rings(P.theta, sh, n_edge, n_arc, fracs, d[1:]), d)
    return MeshLayout(
        P.theta.copy(), n_edge, n_arc, geo, ratio, CORNER_REL, h0_rel, rout_rel, q_near, n_near, L, tuple(int(x) for x in life)
    )


def plan_layout(P: ConvexPolygon, cfg: SolverConfig) -> MeshLayout:
    """Pick segment and layer counts so the mesh has about ``cfg.elements`` triangles."""
    lo, hi = 2.0, 4.0
    if _make_layout(P, cfg, lo).n_triangles >= cfg.elements:
        return _make_layout(P, cfg, lo)
    while _make_layout(P, cfg, hi).n_triangles < cfg.elements and hi < 4096:
        lo, hi = hi, 2.0 * hi
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if _make_layout(P, cfg, mid).n_triangles < cfg.elements:
            lo = mid
        else:
            hi = mid
        if hi - lo < 0.05:
            break
    return _make_layout(P, cfg, lo)


@dataclass(frozen=True)
class _Topology:
    tris: np.ndarray
    n_nodes: int
    n0: int
    inner: np.ndarray
    outer: np.ndarray
    # per edge: layer-0 indices of interior nodes and the matching layer 1..3 nodes
    normal_lines: tuple
    vertex_lines: np.ndarray
    node_layer: np.ndarray
    kept: tuple  # tangential indices present in layers 1..L


def _stitch(fine_ids: np.ndarray, fine_t: np.ndarray, coarse_ids: np.ndarray, coarse_t: np.ndarray) -> np.ndarray:
    """Triangles between a ring and the next one, whose nodes are a subset."""
    pos = np.searchsorted(fine_t, coarse_t)
    nf, nc = len(fine_t), len(coarse_t)
    tris = []
    for k in range(nc):
        i0 = pos[k]
        i1 = pos[(k + 1) % nc] + (nf if k + 1 == nc else 0)
        path = [fine_ids[i % nf] for i in range(i0, i1 + 1)]
        A, B = coarse_ids[k], coarse_ids[(k + 1) % nc]
        h = (len(path) - 1) // 2
        tris.append((path[h], A, B))
        for i in range(len(path) - 1):
            tris.append((path[i], A if i < h else B, path[i + 1]))
    return np.array(tris, dtype=np.int64)


@lru_cache(maxsize=64)
def _topology(layout: MeshLayout) -> _Topology:
    m = layout.m
    ne = np.array(layout.n_edge)
    na = np.array(layout.n_arc)
    L = layout.layers
    life = np.array(layout.life)
    n0 = int(ne.sum())
    base0 = np.concatenate([[0], np.cumsum(ne)[:-1]])
    baseT = np.concatenate([[0], np.cumsum(ne + na)[:-1]])
    kept = [np.flatnonzero(life >= l) for l in range(1, L + 1)]
    start = n0 + np.concatenate([[0], np.cumsum([len(k) for k in kept])])

    def ring(l):
        return start[l - 1]

    tris = []
    r1 = ring(1)
    for j in range(m):
        jn = (j + 1) % m
        inner_idx = list(base0[j] + np.arange(ne[j])) + [base0[jn]]
        outer_idx = list(r1 + baseT[j] + na[j] + np.arange(ne[j])) + [r1 + baseT[jn]]
        for i in range(ne[j]):
            a0, a1, b0, b1 = inner_idx[i], inner_idx[i + 1], outer_idx[i], outer_idx[i + 1]
            tris.append((a0, b0, b1))
            tris.append((a0, b1, a1))
        arc = [r1 + baseT[j] + k for k in range(na[j])] + [r1 + baseT[j] + na[j]]
        for k in range(na[j]):
            tris.append((base0[j], arc[k], arc[k + 1]))
    parts = [np.array(tris, dtype=np.int64).reshape(-1, 3)]
    for l in range(1, L):
        a, b = kept[l - 1], kept[l]
        ida = ring(l) + np.arange(len(a))
        idb = ring(l + 1) + np.arange(len(b))
        if len(a) == len(b):
            t = np.arange(len(a))
            tn = (t + 1) % len(a)
            parts.append(np.stack([ida[t], idb[t], idb[tn]], axis=1))
            parts.append(np.stack([ida[t], idb[tn], ida[tn]], axis=1))
        else:
            parts.append(_stitch(ida, a, idb, b))
    tris = np.concatenate(parts, axis=0)

    lines = []
    for j in range(m):
        i = np.arange(1, ne[j])
        cols = [base0[j] + i] + [ring(l) + baseT[j] + na[j] + i for l in (1, 2, 3)]
        lines.append(np.stack(cols, axis=1))
    # the miter node above vertex j (meaningful only where there is no arc)
    vlines = np.stack([base0] + [ring(l) + baseT + na for l in (1, 2, 3)], axis=1)
    n_nodes = int(start[-1])
    node_layer = np.concatenate([np.zeros(n0, dtype=int)] + [np.full(len(k), l + 1) for l, k in enumerate(kept)])
    return _Topology(
        tris,
        n_nodes,
        n0,
        np.arange(n0),
        np.arange(ring(L), n_nodes),
        tuple(lines),
        vlines,
        node_layer,
        tuple(kept),
    )


@dataclass(frozen=True)
class Frame:
    """Size and placement data derived from the support numbers."""

    center: np.ndarray
    r_out: float
    scale: float  # mean width = perimeter / pi
    perimeter: float
    offsets: np.ndarray  # d_0 = 0, ..., d_L
    vertices: np.ndarray


def mesh_coordinates(theta: np.ndarray, supports: np.ndarray, layout: MeshLayout) -> tuple[np.ndarray, Frame]:
    """Node coordinates for support numbers ``supports`` under ``layout``."""
    m = layout.m
    ne = layout.n_edge
    L = layout.layers
    topo = _topology(layout)
    sh = _shape(theta, supports)
    per = sh.perimeter
    S = per / math.pi
    c = sh.centroid
    r_out = layout.rout_rel * S
    d_max = r_out - per / (2.0 * math.pi)
    d = _layer_offsets(layout.h0_rel * S, layout.q_near, layout.n_near, L, d_max)
    fracs = _edge_fractions(sh, ne, layout.geo, layout.ratio, layout.corner_rel)

    nodes = np.empty((topo.n_nodes, 2))
    for j in range(m):
        off = int(np.sum(ne[:j]))
        nodes[off : off + ne[j]] = sh.v[j] + fracs[j][:, None] * (sh.w[j] - sh.v[j])
    rings = _raw_rings(theta, sh, ne, layout.n_arc, fracs, d[1:])
    # far from the body, blend onto circles with nodes equally spaced in angle
    d_b = BLEND_START_REL * S
    tb = np.clip((d[1:] - d_b) / (d_max - d_b), 0.0, 1.0)
    wgt = tb * tb * (3.0 - 2.0 * tb)
    pos = topo.n0
    for l in range(L):
        pts = rings[l, topo.kept[l]]
        n = len(pts)
        if wgt[l] > 0:
            rel = pts - c
            rad = np.hypot(rel[:, 0], rel[:, 1])
            ang = np.arctan2(rel[:, 1], rel[:, 0])
            uni = 2.0 * math.pi * np.arange(n) / n
            ref = np.angle(np.exp(1j * (ang - uni)).sum())
            ang = ang + wgt[l] * np.angle(np.exp(1j * (ref + uni - ang)))
            rad = (1.0 - wgt[l]) * rad + wgt[l] * (d[l + 1] + per / (2.0 * math.pi))
            pts = c + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        nodes[pos : pos + n] = pts
        pos += n
    return nodes, Frame(c, r_out, S, per, d, sh.v)


@dataclass(frozen=True, eq=False)
class ExteriorMesh:
    nodes: np.ndarray
    tris: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    frame: Frame
    layout: MeshLayout
    normal_lines: tuple = field(repr=False)
    vertex_lines: np.ndarray = field(repr=False)
    node_layer: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.tris)

    @property
    def r_out(self) -> float:
        return self.frame.r_out

    @property
    def center(self) -> np.ndarray:
        return self.frame.center

    def areas(self) -> np.ndarray:
        return triangle_areas(self.nodes, self.tris)

    def min_angle_deg(self) -> float:
        p = self.nodes[self.tris]
        angs = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosv = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angs.append(np.degrees(np.arccos(np.clip(cosv, -1, 1))))
        return float(np.min(angs))


def triangle_areas(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_mesh(P: ConvexPolygon, cfg: SolverConfig, layout: MeshLayout | None = None) -> ExteriorMesh:
    """Mesh the annulus between ``P`` and the truncation circle.

    Raises
    ------
    MeshFailure
        Degenerate input, a layout planned for other normals, or inverted
        triangles.
    """
    if P.m < 3:
        raise MeshFailure("polygon needs at least three edges")
    if layout is None:
        layout = plan_layout(P, cfg)
    elif layout.m != P.m or not np.allclose(layout.theta, P.theta, atol=1e-12):
        raise MeshFailure("layout was planned for different normals")
    nodes, frame = mesh_coordinates(P.theta, P.supports, layout)
    topo = _topology(layout)
    areas = triangle_areas(nodes, topo.tris)
    if not np.all(areas > 0):
        raise MeshFailure(f"{int(np.sum(areas <= 0))} inverted triangles")
    return ExteriorMesh(
        nodes, topo.tris, topo.inner, topo.outer, frame, layout, topo.normal_lines, topo.vertex_lines, topo.node_layer
    )
