"""Equilibrium potentials of a convex polygon by P1 finite elements.

For ``1 < p < 2`` the potential vanishes on the polygon and tends to 1 at
infinity; for ``p = 2`` it vanishes on the polygon and grows like
``log|x| - log cap``.  The exterior is truncated at the circle of radius
``R_out`` about the area centroid, where the radial far-field behaviour is
imposed as a natural boundary term:

* ``p < 2``: flux ``(k / rho)^(p-1) (1 - u)^(p-1)`` with ``k = (2-p)/(p-1)``,
  exact for every multiple of the radial solution ``1 - C rho^(-k)``;
* ``p = 2``: flux ``1 / rho``.

Both problems are minimisation problems for a convex energy ``J``.  The
capacity is read off the minimum: ``pcap = p J*`` for ``p < 2`` (testing the
equation with ``u`` turns the energy into the total flux), and
``log cap = log R_out + J* / pi`` for ``p = 2`` (the angular mean of
``u - log rho`` over a circle about the body equals ``-log cap``).

The gradient term is regularised as ``(|grad u|^2 + eps^2)^(p/2)`` with
``eps`` relative to the mean width, so the discrete capacity is exactly
translation invariant and homogeneous under dilation for a fixed layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .config import SolverConfig, check_p
from .geometry import ConvexPolygon
from .mesh import ExteriorMesh, MeshLayout, build_mesh, mesh_coordinates

EPS_SCHEDULE = (1e-2, 1e-4, 1e-6)
ARMIJO = 1e-4
TRACE_CUT_LAYERS = 4.0
TAIL_SPAN = 2.0
TAIL_EXACT = True


class NewtonDivergence(RuntimeError):
    """Newton iteration failed; ``history`` holds ``(eps, step, energy, decrement)`` rows."""

    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


def far_exponent(p: float) -> float:
    """``k = (2 - p) / (p - 1)``, the decay exponent of ``1 - u`` at infinity."""
    return (2.0 - p) / (p - 1.0)


def _sector_opening(lam: float, p: float) -> float:
    # opening angle of the sector carrying the positive solution r^lam f(phi)
    a = lam * lam
    b = lam * (lam * (p - 1.0) + 2.0 - p) / (p - 1.0)
    e = a / (p - 1.0)
    if abs(b - a) <= 1e-12 * a:
        return math.pi / lam
    return math.pi * ((e - a) / ((b - a) * math.sqrt(a)) + (b - e) / ((b - a) * math.sqrt(b)))


def corner_exponent(p: float, opening: float) -> float:
    """Homogeneity ``lam`` of the positive ``p``-harmonic function ``r^lam f(phi)``
    vanishing on both sides of a sector with the given opening angle.

    Near a convex corner with turning angle ``t`` the exterior is locally a
    sector of opening ``pi + t`` and ``|grad u| ~ r^(lam - 1)``.  With
    ``v = f'/f`` the separated equation becomes a first-order equation for
    ``v``, and the opening is a closed-form integral over ``v``.
    """
    p = check_p(p)
    if not 0.0 < opening < 2.0 * math.pi:
        raise ValueError("opening must lie in (0, 2 pi)")
    if p == 2.0:
        return math.pi / opening
    return brentq(lambda lam: _sector_opening(lam, p) - opening, 1e-6, 1e3, xtol=1e-14, rtol=1e-14)


def p1_gradients(nodes: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Triangle areas and barycentric gradients, shape ``(T, 3, 2)``."""
    p = nodes[tris]
    e = np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1)  # p_{a+1} - p_{a-1}
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    grads = np.stack([e[..., 1], -e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    return area, grads


def outer_weights(nodes: np.ndarray, outer: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Lumped angular weights of the outer ring nodes; they sum to ``2 pi``."""
    rel = nodes[outer] - center
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    gap = np.mod(np.roll(ang, -1) - ang, 2.0 * math.pi)
    return 0.5 * (gap + np.roll(gap, 1))


@dataclass(frozen=True)
class _Params:
    p: float
    eps: float  # absolute gradient regularisation
    eps_b: float  # boundary-term regularisation (dimensionless)


def _energy_terms(u, nodes, tris, outer, center, prm: _Params):
    area, grads = p1_gradients(nodes, tris)
    g = np.einsum("ta,tad->td", u[tris], grads)
    s = np.einsum("td,td->t", g, g) + prm.eps**2
    w = outer_weights(nodes, outer, center)
    rho = np.linalg.norm(nodes[outer] - center, axis=1)
    return area, grads, g, s, w, rho


def energy(u: np.ndarray, nodes: np.ndarray, tris: np.ndarray, outer: np.ndarray, center: np.ndarray, prm: _Params) -> float:
    """Discrete energy ``J`` (see module docstring)."""
    area, _, _, s, w, rho = _energy_terms(u, nodes, tris, outer, center, prm)
    p = prm.p
    if p == 2.0:
        return float(0.5 * area @ (s - prm.eps**2) - w @ u[outer])
    k = far_exponent(p)
    bulk = area @ (s ** (p / 2) - prm.eps**p) / p
    b = (1.0 - u[outer]) ** 2 + prm.eps_b**2
    edge = (w * k ** (p - 1) * rho ** (2 - p)) @ (b ** (p / 2)) / p
    return float(bulk + edge)


class _Assembler:
    """Gradient and Hessian of the energy on a fixed mesh."""

    def __init__(self, mesh: ExteriorMesh):
        self.mesh = mesh
        self.area, self.grads = p1_gradients(mesh.nodes, mesh.tris)
        self.w = outer_weights(mesh.nodes, mesh.outer, mesh.center)
        self.rho = np.linalg.norm(mesh.nodes[mesh.outer] - mesh.center, axis=1)
        n = mesh.n_nodes
        free = np.ones(n, dtype=bool)
        free[mesh.inner] = False
        self.free = np.flatnonzero(free)
        self.rows = np.repeat(mesh.tris, 3, axis=1).ravel()
        self.cols = np.tile(mesh.tris, (1, 3)).ravel()
        # G_a . G_b per triangle, reused for p = 2
        self.gg = np.einsum("tad,tbd->tab", self.grads, self.grads)

    def energy(self, u, prm: _Params) -> float:
        m = self.mesh
        return energy(u, m.nodes, m.tris, m.outer, m.center, prm)

    def grad_hess(self, u, prm: _Params):
        m = self.mesh
        p = prm.p
        n = m.n_nodes
        g = np.einsum("ta,tad->td", u[m.tris], self.grads)
        s = np.einsum("td,td->t", g, g) + prm.eps**2
        a = s ** ((p - 2) / 2)
        grad = np.zeros(n)
        np.add.at(grad, m.tris.ravel(), (self.area[:, None] * a[:, None] * np.einsum("td,tad->ta", g, self.grads)).ravel())
        if p == 2.0:
            loc = self.area[:, None, None] * self.gg
        else:
            bcoef = (p - 2) * s ** ((p - 4) / 2)
            Gg = np.einsum("tad,td->ta", self.grads, g)
            loc = self.area[:, None, None] * (a[:, None, None] * self.gg + bcoef[:, None, None] * Gg[:, :, None] * Gg[:, None, :])
        H = sp.coo_matrix((loc.ravel(), (self.rows, self.cols)), shape=(n, n)).tocsr()
        diag = np.zeros(n)
        if p == 2.0:
            np.add.at(grad, m.outer, -self.w)
        else:
            k = far_exponent(p)
            c = self.w * k ** (p - 1) * self.rho ** (2 - p)
            t = 1.0 - u[m.outer]
            b = t * t + prm.eps_b**2
            np.add.at(grad, m.outer, -c * b ** ((p - 2) / 2) * t)
            diag[m.outer] += c * (b ** ((p - 2) / 2) + (p - 2) * b ** ((p - 4) / 2) * t * t)
        H = H + sp.diags(diag)
        f = self.free
        return grad[f], H[f][:, f].tocsc()


def initial_guess(mesh: ExteriorMesh, p: float) -> np.ndarray:
    """Radial profile of a disk of radius half the mean width, evaluated at the layer offsets."""
    d = node_offsets(mesh)
    r0 = 0.5 * mesh.frame.scale
    if p == 2.0:
        return np.log1p(d / r0)
    return 1.0 - (1.0 + d / r0) ** (-far_exponent(p))


def node_offsets(mesh: ExteriorMesh) -> np.ndarray:
    """Offset ``d`` of the layer each node belongs to."""
    return mesh.frame.offsets[mesh.node_layer]


@dataclass(eq=False)
class PotentialSolution:
    """Discrete equilibrium potential on an exterior mesh.

    Attributes
    ----------
    u : nodal values.
    energy : minimum of the regularised energy.
    capacity : ``p``-capacity for ``p < 2``; logarithmic capacity for ``p = 2``.
    eps_rel : final regularisation relative to the mean width.
    history : ``(eps, step, energy, decrement)`` per Newton step.
    """

    polygon: ConvexPolygon
    p: float
    mesh: ExteriorMesh
    u: np.ndarray
    energy: float
    capacity: float
    eps_rel: float
    history: list = field(default_factory=list, repr=False)
    _trace: list | None = field(default=None, repr=False)

    @property
    def layout(self) -> MeshLayout:
        return self.mesh.layout

    @property
    def nodal_values(self) -> np.ndarray:
        return self.u

    @property
    def eps_reg(self) -> float:
        """Final regularisation, absolute (relative value divided by the mean width)."""
        return self.eps_rel / self.mesh.frame.scale

    @property
    def newton_iters(self) -> int:
        return len(self.history)

    @property
    def R_out(self) -> float:
        return self.mesh.r_out

    @property
    def boundary_gradient(self) -> list:
        """Per-edge :class:`EdgeTrace` of ``|grad u|`` on the polygon."""
        if self._trace is None:
            self._trace = boundary_trace(self)
        return self._trace

    def maximum_principle_violation(self) -> float:
        """``max(0, -min u, max u - 1)`` for ``p < 2``; ``max(0, -min u)`` for ``p = 2``."""
        lo = max(0.0, -float(self.u.min()))
        if self.p == 2.0:
            return lo
        return max(lo, float(self.u.max()) - 1.0)

    def params(self) -> _Params:
        return _Params(self.p, self.eps_rel / self.mesh.frame.scale, self.eps_rel)


def capacity_from_energy(p: float, J: float, r_out: float) -> float:
    if p == 2.0:
        return r_out * math.exp(J / math.pi)
    return p * J


def _newton(asm: _Assembler, u: np.ndarray, prm: _Params, cfg: SolverConfig, history: list) -> np.ndarray:
    f = asm.free
    J = asm.energy(u, prm)
    for it in range(cfg.newton_max):
        grad, H = asm.grad_hess(u, prm)
        try:
            step = -splu(H).solve(grad)
        except RuntimeError as exc:
            raise NewtonDivergence(f"singular Newton system: {exc}", history) from exc
        dec = -float(grad @ step)
        history.append((prm.eps, it, J, dec))
        if not np.all(np.isfinite(step)) or dec < -1e-12 * max(1.0, abs(J)):
            raise NewtonDivergence("Newton direction is not a descent direction", history)
        if prm.p == 2.0:
            u[f] += step
            return u
        small = np.max(np.abs(step)) <= cfg.newton_tol
        if dec <= 1e-13 * max(abs(J), 1e-300):
            # at roundoff level; the energy cannot resolve further progress
            u[f] += step
            if small:
                return u
            continue
        t = 1.0
        while True:
            trial = u.copy()
            trial[f] += t * step
            Jt = asm.energy(trial, prm)
            if np.isfinite(Jt) and Jt <= J - ARMIJO * t * dec:
                break
            t *= 0.5
            if t < 1e-12:
                raise NewtonDivergence("line search failed", history)
        u, J = trial, Jt
        if small and t == 1.0:
            return u
    raise NewtonDivergence(f"no convergence in {cfg.newton_max} Newton steps", history)


def solve_potential(
    P: ConvexPolygon,
    p: float,
    cfg: SolverConfig | None = None,
    layout: MeshLayout | None = None,
    warm: PotentialSolution | None = None,
    mesh: ExteriorMesh | None = None,
) -> PotentialSolution:
    """Minimise the discrete energy for polygon ``P``.

    A warm start (same layout) skips the regularisation continuation.

    Raises
    ------
    NewtonDivergence
        With the iterate history attached.
    """
    cfg = cfg or SolverConfig()
    p = check_p(p)
    if mesh is None:
        if layout is None and warm is not None:
            layout = warm.layout
        mesh = build_mesh(P, cfg, layout)
    asm = _Assembler(mesh)
    if warm is not None and warm.layout == mesh.layout and warm.p == p:
        u = warm.u.copy()
        schedule = [cfg.eps_final]
    else:
        u = initial_guess(mesh, p)
        schedule = [e for e in EPS_SCHEDULE if e > cfg.eps_final] + [cfg.eps_final]
    u[mesh.inner] = 0.0
    history: list = []
    for eps in schedule:
        prm = _Params(p, eps / mesh.frame.scale, eps)
        u = _newton(asm, u, prm, cfg, history)
    J = asm.energy(u, prm)
    return PotentialSolution(P, p, mesh, u, J, capacity_from_energy(p, J, mesh.r_out), cfg.eps_final, history)


def energy_at(sol: PotentialSolution, supports: np.ndarray) -> tuple[float, float]:
    """Energy of the frozen nodal values on the mesh for other support numbers.

    Returns ``(J, R_out)``.  By the envelope property its derivative in the
    support numbers equals that of the minimum energy.
    """
    nodes, frame = mesh_coordinates(sol.polygon.theta, supports, sol.layout)
    prm = _Params(sol.p, sol.eps_rel / frame.scale, sol.eps_rel)
    return energy(sol.u, nodes, sol.mesh.tris, sol.mesh.outer, frame.center, prm), frame.r_out


# ---------------------------------------------------------------------------
# boundary trace


@dataclass(frozen=True)
class EdgeTrace:
    """Normal derivative samples on one edge.

    ``x`` are arc-length positions of the interior boundary nodes measured from
    the start vertex, ``grad`` the recovered ``|grad u|`` there.
    """

    length: float
    x: np.ndarray
    grad: np.ndarray
    closed_start: bool = False  # sample at the start vertex included
    closed_end: bool = False


def boundary_trace(sol: PotentialSolution) -> list[EdgeTrace]:
    """``|grad u|`` at boundary nodes from a one-sided three-point formula.

    Layer nodes above a boundary node lie on a straight line through it, so
    ``u(d)`` along that line is fitted by a quadratic through ``u(0) = 0``,
    ``u(d1)``, ``u(d2)``.  Interior edge nodes are always sampled; a vertex is
    sampled (and shared by its two edges) only where the corner is nearly
    flat and the gradient stays bounded.
    """
    mesh = sol.mesh
    d1, d2 = mesh.frame.offsets[1], mesh.frame.offsets[2]
    v = mesh.frame.vertices
    m = len(v)

    def slope(line):
        u1, u2 = sol.u[line[..., 1]], sol.u[line[..., 2]]
        return (u1 * d2 * d2 - u2 * d1 * d1) / (d1 * d2 * (d2 - d1))

    flat = np.array(mesh.layout.n_arc) == 0
    turn = sol.polygon.turning_angles
    # the miter line has length 1/cos(turn/2) per unit offset
    gv = slope(mesh.vertex_lines) * np.cos(0.5 * turn)
    out = []
    for j, line in enumerate(mesh.normal_lines):
        a, b = v[j], v[(j + 1) % m]
        ell = float(np.linalg.norm(b - a))
        x = np.linalg.norm(mesh.nodes[line[:, 0]] - a, axis=1)
        g = slope(line)
        if flat[j]:
            x, g = np.concatenate([[0.0], x]), np.concatenate([[gv[j]], g])
        if flat[(j + 1) % m]:
            x, g = np.concatenate([x, [ell]]), np.concatenate([g, [gv[(j + 1) % m]]])
        out.append(EdgeTrace(ell, x, g, bool(flat[j]), bool(flat[(j + 1) % m])))
    return out


def _power_segment(xa, xb, ga, gb):
    """``int_xa^xb`` of the power law through ``(xa, ga)``, ``(xb, gb)``."""
    if ga <= 0 or gb <= 0 or xa <= 0:
        return 0.5 * (ga + gb) * (xb - xa)
    s = math.log(gb / ga) / math.log(xb / xa)
    if abs(s + 1.0) < 1e-9:
        return xa * ga * math.log(xb / xa)
    return (xb * gb - xa * ga) / (s + 1.0)


def edge_integral(tr: EdgeTrace, values: np.ndarray, cut: float, tail_slopes: tuple | None = None) -> float:
    """Integrate nodal ``values`` over the edge, power-law aware near corners.

    At a sharp corner, samples closer than ``cut`` are ignored and the piece
    between the vertex and the nearest kept sample ``x_a`` is integrated as
    the power law ``x^s`` through the value at ``x_a``, with ``s`` from
    ``tail_slopes`` (start, end) or else fitted through the first sample
    beyond ``TAIL_SPAN * x_a``.  Segments in the same half of the edge use the power
    law in the distance to that half's vertex.  Where the vertex itself was
    sampled, plain segments reach it.
    """
    x = tr.x
    ell = tr.length
    dist = np.minimum(x, ell - x)
    keep = (dist >= cut) | ((x == 0.0) & tr.closed_start) | ((x == ell) & tr.closed_end)
    if keep.sum() < 4:
        keep = np.ones_like(keep)
    xs, fs = x[keep], values[keep]
    if len(xs) < 2:
        return float(fs.mean() * ell)
    half = ell / 2
    total = 0.0
    for i in range(len(xs) - 1):
        xa, xb, fa, fb = xs[i], xs[i + 1], fs[i], fs[i + 1]
        if xb <= half and not tr.closed_start:
            total += _power_segment(xa, xb, fa, fb)
        elif xa >= half and not tr.closed_end:
            total += _power_segment(ell - xb, ell - xa, fb, fa)
        else:
            total += 0.5 * (fa + fb) * (xb - xa)
    tails = []
    slopes = tail_slopes or (None, None)
    if not tr.closed_start:
        tails.append((xs, fs, slopes[0]))
    if not tr.closed_end:
        tails.append(((ell - xs)[::-1], fs[::-1], slopes[1]))
    for xt, ft, s in tails:
        xa, fa = xt[0], ft[0]
        if s is None:
            far = np.flatnonzero(xt >= TAIL_SPAN * xa)
            ib = far[0] if len(far) and xt[far[0]] < half else 1
            xb, fb = xt[ib], ft[ib]
            s = math.log(fb / fa) / math.log(xb / xa) if fa > 0 and fb > 0 else 0.0
        total += xa * fa / (max(s, -0.95) + 1.0)
    return float(total)


def trace_integrals(sol: PotentialSolution, power: float, cfg: SolverConfig | None = None) -> np.ndarray:
    """``int_edge |grad u|^power`` for every edge by the boundary trace."""
    cfg = cfg or SolverConfig()
    diam = sol.polygon.metrics().diameter
    # the trace is least accurate within a few layer spacings of a corner
    near = TRACE_CUT_LAYERS * sol.mesh.frame.offsets[2]
    turn = sol.polygon.turning_angles
    slope = np.array([power * (corner_exponent(sol.p, math.pi + t) - 1.0) for t in turn])
    m = len(turn)
    res = []
    for j, tr in enumerate(boundary_trace(sol)):
        cut = max(cfg.corner_cut_rel * min(diam, tr.length), min(near, 0.1 * tr.length))
        tails = (slope[j], slope[(j + 1) % m]) if TAIL_EXACT else None
        res.append(edge_integral(tr, np.maximum(tr.grad, 0.0) ** power, cut, tails))
    return np.array(res)


# ---------------------------------------------------------------------------
# closed forms


@dataclass(frozen=True)
class DiskPotential:
    p: float
    radius: float

    def value(self, r):
        r = np.asarray(r, dtype=float)
        if self.p == 2.0:
            return np.log(r / self.radius)
        return 1.0 - (r / self.radius) ** (-far_exponent(self.p))

    def gradient_norm(self, r):
        r = np.asarray(r, dtype=float)
        if self.p == 2.0:
            return 1.0 / r
        k = far_exponent(self.p)
        return k / self.radius * (r / self.radius) ** (-k - 1)

    @property
    def capacity(self) -> float:
        if self.p == 2.0:
            return self.radius
        k = far_exponent(self.p)
        return 2.0 * math.pi * k ** (self.p - 1) * self.radius ** (2 - self.p)


def analytic_disk(p: float, radius: float = 1.0) -> DiskPotential:
    """Closed-form potential of the disk of given radius."""
    return DiskPotential(check_p(p), float(radius))
