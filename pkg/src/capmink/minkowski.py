"""Polygons with a prescribed capacitary curvature measure.

Given atoms ``c_j`` at normals ``zeta_j``, minimise ``sum_j c_j h_j`` over
support vectors with ``cap(h) >= 1``.  The capacity is homogeneous
(degree ``2 - p`` for ``p < 2``, logarithmic capacity of degree 1 at
``p = 2``), so with ``G = cap^(1/(2-p))`` (``G = cap`` at ``p = 2``) the problem
is the unconstrained minimisation of the scale-invariant ratio
``F(h) = c . h / G(h)``.  Every accepted iterate is rescaled to ``cap = 1``
and recentred at its area centroid; both moves leave ``F`` unchanged.

At the minimiser ``c`` is proportional to the capacity gradient, i.e. to
``mu_j``; a final dilation by ``r = lambda^(1/(p-1))`` (``lambda`` the
least-squares ratio ``mu / c``) turns the proportionality into equality,
since ``mu`` scales like ``r^(1-p)`` under dilation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacitary import variational_weights
from .config import SolverConfig, check_p
from .geometry import (
    ConvexPolygon,
    GeometryError,
    body_metrics,
    centered,
    hausdorff_distance,
    polygon_from_support,
    polygon_to_dict,
    transform,
    unit_vectors,
)
from .measures import (
    SurfaceMeasure,
    discretize_density,
    validate_measure,
    weak_distance,
)
from .mesh import MeshFailure, MeshLayout, plan_layout
from .potential import NewtonDivergence, PotentialSolution, solve_potential

ARMIJO = 1e-4
EDGE_FLOOR_REL = 1e-3  # shortest admissible edge relative to the mean edge
CERT_SLACK = 1e-4
F_NOISE = 1e-12
EDGE_TRUST = math.log(1.5)  # largest change of any edge length per step, as a log ratio
REPLAN_KKT = 1e-3  # re-plan the mesh after every step while the residual is above this


class Inadmissible(ValueError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class Stalled(RuntimeError):
    """Descent stopped before the KKT tolerance; ``best`` is the last accepted iterate."""

    def __init__(self, message: str, best: MinkowskiSolution | None = None):
        super().__init__(message)
        self.best = best


class DegenerateIterate(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    kkt_tol: float = 1e-6
    max_iter: int = 300
    max_replans: int = 6
    restart_spread: float = 0.15  # log-normal spread of random initial support numbers
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass(frozen=True, eq=False)
class MinkowskiProblem:
    target: SurfaceMeasure
    p: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        object.__setattr__(self, "p", check_p(self.p))
        rep = validate_measure(self.target)
        if not rep.admissible:
            raise Inadmissible(rep.reason(), rep)
        if len(self.target) < 3:
            raise Inadmissible("at least three atoms are needed", rep)


@dataclass(frozen=True, eq=False)
class MinkowskiSolution:
    polygon: ConvexPolygon
    p: float
    target: SurfaceMeasure
    objective: float  # c . h at cap = 1
    kkt_residual: float
    measure: np.ndarray  # computed mu_j of the returned polygon
    measure_match: np.ndarray  # |mu_j - c_j| / c_j
    certificate: float  # bound on measure_match, also for a recomputation on a freshly planned layout
    rescale_factor: float
    iterations: int
    converged: bool
    layout: MeshLayout = field(repr=False)
    potential: PotentialSolution = field(repr=False)
    solver: SolverConfig = field(repr=False)
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = polygon_to_dict(self.polygon)
        d.update(
            {
                "p": self.p,
                "objective": float(self.objective),
                "kkt_residual": float(self.kkt_residual),
                "rescale_factor": float(self.rescale_factor),
                "measure_match": [float(x) for x in self.measure_match],
                "certificate": float(self.certificate),
                "iterations": int(self.iterations),
                "converged": bool(self.converged),
                "target": self.target.to_dict(),
            }
        )
        return d


def classical_polygon(mu: SurfaceMeasure) -> ConvexPolygon:
    """Polygon whose edge with outer normal ``zeta_j`` has length ``c_j``.

    Edge vectors ``c_j * rot90(zeta_j)`` are chained in angular order; the
    result is centred at its area centroid.

    Raises
    ------
    Inadmissible
        If the measure is not admissible.
    """
    rep = validate_measure(mu)
    if not rep.admissible or len(mu) < 3:
        raise Inadmissible(rep.reason() if not rep.admissible else "at least three atoms are needed", rep)
    z = unit_vectors(mu.theta)
    edges = mu.weights[:, None] * np.stack([-z[:, 1], z[:, 0]], axis=1)
    verts = np.concatenate([[np.zeros(2)], np.cumsum(edges, axis=0)[:-1]])
    h = np.sum(verts * z, axis=1)  # vertex j starts edge j
    return centered(polygon_from_support(mu.theta, h))


# ---------------------------------------------------------------------------
# objective evaluation


@dataclass
class _Point:
    h: np.ndarray
    sol: PotentialSolution  # potential of the unnormalised polygon; used as a warm start
    mu: np.ndarray
    cap: float
    grad_cap: np.ndarray
    F: float
    grad_F: np.ndarray
    kkt: float


class _Objective:
    def __init__(self, prob: MinkowskiProblem):
        self.prob = prob
        self.c = prob.target.weights
        self.theta = prob.target.theta
        self.p = prob.p
        self.alpha = 1.0 if self.p == 2.0 else 1.0 / (2.0 - self.p)
        self.layout: MeshLayout | None = None
        self.follow = True  # re-plan the layout after each step
        self.solves = 0

    def polygon(self, h: np.ndarray) -> ConvexPolygon:
        try:
            P = polygon_from_support(self.theta, h)
        except GeometryError as exc:
            raise DegenerateIterate(str(exc)) from exc
        if P.m != len(self.theta):
            raise DegenerateIterate(f"{len(self.theta) - P.m} edges collapsed")
        ell = P.edge_lengths
        if ell.min() < EDGE_FLOOR_REL * ell.mean():
            raise DegenerateIterate("an edge is shorter than the floor")
        return P

    def evaluate(self, h: np.ndarray, warm: PotentialSolution | None = None) -> _Point:
        P = self.polygon(h)
        if self.layout is None:
            self.layout = plan_layout(P, self.prob.solver)
        try:
            sol = solve_potential(P, self.p, self.prob.solver, layout=self.layout, warm=warm)
        except MeshFailure as exc:
            raise DegenerateIterate(f"mesh: {exc}") from exc
        self.solves += 1
        mu = variational_weights(sol)
        cap = sol.capacity
        gcap = cap * mu / (2.0 * math.pi) if self.p == 2.0 else (self.p - 1.0) * mu
        G = cap**self.alpha
        gG = self.alpha * cap ** (self.alpha - 1.0) * gcap
        F = float(self.c @ h) / G
        gF = (self.c - F * gG) / G
        lam = float(self.c @ gcap) / float(gcap @ gcap)
        kkt = float(np.linalg.norm(self.c - lam * gcap) / np.linalg.norm(self.c))
        return _Point(h, sol, mu, cap, gcap, F, gF, kkt)

    def normalize(self, pt: _Point) -> _Point:
        """Rescale to ``cap = 1`` and recentre; exact by homogeneity and translation invariance."""
        t = pt.cap ** (-self.alpha)
        P = transform(polygon_from_support(self.theta, pt.h), (0.0, 0.0), t)
        shift = -body_metrics(P).centroid
        h = P.supports + P.normal_vectors @ shift
        # mu scales like t^(1-p); the capacity gradient like t^(1-1/alpha); grad F like 1/t
        return _Point(
            h, pt.sol, pt.mu * t ** (1.0 - self.p), 1.0, pt.grad_cap * t ** (1.0 - 1.0 / self.alpha), pt.F, pt.grad_F / t, pt.kkt
        )


def _null_basis(theta: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the translation and dilation directions."""
    z = unit_vectors(theta)
    q, _ = np.linalg.qr(np.column_stack([z, h]))
    return q


def _project(v: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return v - Q @ (Q.T @ v)


# ---------------------------------------------------------------------------
# solver


def _initial_supports(prob: MinkowskiProblem, rng: np.random.Generator | None) -> np.ndarray:
    base = classical_polygon(prob.target)
    h0 = base.supports
    if rng is None:
        return h0
    obj = _Objective(prob)
    for _ in range(200):
        h = h0 * np.exp(prob.optimizer.restart_spread * rng.standard_normal(len(h0)))
        try:
            P = obj.polygon(h)
        except DegenerateIterate:
            continue
        return centered(P).supports
    raise DegenerateIterate("could not draw a random initial polygon with all edges")


def _descend(obj: _Objective, pt: _Point, opt: OptimizerConfig, history: list, budget: int) -> tuple[_Point, int, bool]:
    """BFGS on ``F`` in the complement of the null directions, fixed layout."""
    it = 0
    Hinv = None
    while it < budget:
        if pt.kkt <= opt.kkt_tol:
            return pt, it, True
        Q = _null_basis(obj.theta, pt.h)
        g = _project(pt.grad_F, Q)
        if Hinv is None:
            # first step moves the support numbers by about 1% of their mean
            d = -g * (0.01 * np.mean(np.abs(pt.h)) / np.linalg.norm(g))
        else:
            d = -_project(Hinv @ g, Q)
        slope = float(g @ d)
        if slope >= 0:
            Hinv = None
            continue
        it += 1
        t, new = 1.0, None
        ell0 = obj.polygon(pt.h).edge_lengths
        for _ in range(30):
            try:
                ell = obj.polygon(pt.h + t * d).edge_lengths
                if np.any(np.abs(np.log(ell / ell0)) > EDGE_TRUST):
                    t *= 0.5
                    continue
                cand = obj.evaluate(pt.h + t * d, warm=pt.sol)
            except (DegenerateIterate, NewtonDivergence):
                t *= 0.5
                continue
            if cand.F <= pt.F + ARMIJO * t * slope:
                new = cand
                break
            # near the optimum F is flat to roundoff; accept a step that lowers the residual
            if cand.F <= pt.F + F_NOISE * abs(pt.F) and cand.kkt < pt.kkt:
                new = cand
                break
            t *= 0.5
        if new is None:
            history.append(("line-search-failed", it, pt.F, pt.kkt))
            if Hinv is not None:
                Hinv = None
                continue
            return pt, it, False
        new = obj.normalize(new)
        if obj.follow and new.kkt > REPLAN_KKT:
            # far from the optimum the layout follows the geometry
            fresh = plan_layout(obj.polygon(new.h), obj.prob.solver)
            if fresh != obj.layout:
                obj.layout = fresh
                new = obj.normalize(obj.evaluate(new.h))
                history.append(("replan", it, new.F, new.kkt))
        s = _project(new.h - pt.h, Q)
        y = _project(new.grad_F, Q) - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if Hinv is None:
                Hinv = np.eye(len(g)) * (sy / float(y @ y))
            rho = 1.0 / sy
            V = np.eye(len(g)) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        pt = new
        obj.follow = obj.follow and pt.kkt > REPLAN_KKT
        history.append(("step", it, pt.F, pt.kkt))
    return pt, it, pt.kkt <= opt.kkt_tol


def _finish(obj: _Objective, pt: _Point, iterations: int, converged: bool, history: list) -> MinkowskiSolution:
    prob = obj.prob
    p = prob.p
    c = obj.c
    lam = float(pt.mu @ c) / float(c @ c)
    r = lam ** (1.0 / (p - 1.0))
    Q = centered(transform(polygon_from_support(obj.theta, pt.h), (0.0, 0.0), r))
    P = polygon_from_support(Q.theta, Q.supports)  # the form a JSON round trip reproduces
    # layouts are scale free, so the dilated optimum keeps the layout
    sol = solve_potential(P, p, prob.solver, layout=obj.layout, warm=pt.sol)
    mu_f = variational_weights(sol)
    match = np.abs(mu_f - c) / c
    # the certificate also covers a recomputation on the layout planned from scratch
    bound = float(match.max())
    fresh = plan_layout(P, prob.solver)
    if fresh != obj.layout:
        mu_fresh = variational_weights(solve_potential(P, p, prob.solver, layout=fresh))
        bound = max(bound, float(np.max(np.abs(mu_fresh - c) / c)))
    gcap = sol.capacity * mu_f / (2.0 * math.pi) if p == 2.0 else (p - 1.0) * mu_f
    lam_f = float(c @ gcap) / float(gcap @ gcap)
    kkt = float(np.linalg.norm(c - lam_f * gcap) / np.linalg.norm(c))
    return MinkowskiSolution(
        polygon=P,
        p=p,
        target=prob.target,
        objective=pt.F,
        kkt_residual=kkt,
        measure=mu_f,
        measure_match=match,
        certificate=bound + CERT_SLACK,
        rescale_factor=r,
        iterations=iterations,
        converged=converged,
        layout=obj.layout,
        potential=sol,
        solver=prob.solver,
        history=history,
    )


def solve_discrete(
    prob: MinkowskiProblem, seed: int | None = None, layout: MeshLayout | None = None
) -> MinkowskiSolution:
    """Solve the discrete problem; ``seed`` selects a random initial polygon.

    A given ``layout`` is used throughout; otherwise the layout is adapted.
    While the KKT residual is large the mesh layout is re-planned after every
    step.  Near the optimum it is frozen so the objective is smooth; after
    convergence it is re-planned on the optimum and descent resumes on the new
    layout, until the plan repeats a layout already converged on.

    Raises
    ------
    Stalled
        KKT tolerance not met within the iteration budget (``best`` attached).
    DegenerateIterate
        No usable initial polygon.
    """
    opt = prob.optimizer
    rng = None if seed is None else np.random.default_rng(seed)
    obj = _Objective(prob)
    if layout is not None:
        obj.layout = layout
        obj.follow = False
    h = _initial_supports(prob, rng)
    pt = obj.normalize(obj.evaluate(h))
    history: list = []
    seen: set = set()
    total = 0
    converged = False
    for k in range(opt.max_replans + 1):
        pt, it, converged = _descend(obj, pt, opt, history, opt.max_iter - total)
        total += it
        seen.add(obj.layout)
        if not converged or layout is not None or k == opt.max_replans:
            break
        fresh = plan_layout(obj.polygon(pt.h), prob.solver)
        # a repeated layout means the plan oscillates across a quantization boundary
        if fresh in seen:
            break
        history.append(("replan", total, pt.F, pt.kkt))
        obj.layout = fresh
        obj.follow = False
        pt = obj.normalize(obj.evaluate(pt.h))
    sol = _finish(obj, pt, total, converged, history)
    if not converged:
        raise Stalled(f"KKT residual {pt.kkt:.3e} above {opt.kkt_tol:.1e} after {total} iterations", sol)
    return sol


def uniqueness_check(prob: MinkowskiProblem, n_restarts: int = 3) -> tuple[float, list]:
    """Largest pairwise Hausdorff distance between centroid-aligned solutions from random starts.

    The first restart fixes the mesh layout for the others, so every restart
    solves the same discrete problem.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be positive")
    first = solve_discrete(prob, seed=prob.optimizer.seed)
    sols = [first] + [solve_discrete(prob, seed=prob.optimizer.seed + k, layout=first.layout) for k in range(1, n_restarts)]
    polys = [centered(s.polygon) for s in sols]
    best = 0.0
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            best = max(best, hausdorff_distance(polys[i], polys[j]))
    return best, sols


@dataclass(frozen=True, eq=False)
class DensityRun:
    schedule: tuple
    targets: list
    solutions: list
    weak_distances: list  # between consecutive targets
    hausdorff_deltas: list  # between consecutive centroid-aligned solutions
    monge_ampere: list  # per refinement: (mean, max) residual

    def table(self) -> list[dict]:
        rows = []
        for k, m in enumerate(self.schedule):
            P = self.solutions[k].polygon
            v = np.linalg.norm(P.vertices, axis=1)
            rows.append(
                {
                    "m": int(m),
                    "kkt_residual": float(self.solutions[k].kkt_residual),
                    "circumradius": float(v.max()),
                    "inradius": float(P.supports.min()),
                    "weak_distance_prev": float(self.weak_distances[k - 1]) if k else None,
                    "hausdorff_prev": float(self.hausdorff_deltas[k - 1]) if k else None,
                    "monge_ampere_mean": float(self.monge_ampere[k][0]),
                    "monge_ampere_max": float(self.monge_ampere[k][1]),
                }
            )
        return rows


def solve_density(
    theta_s,
    psi,
    p: float,
    schedule=(8, 16, 32),
    solver: SolverConfig | None = None,
    optimizer: OptimizerConfig | None = None,
) -> DensityRun:
    """Discretize ``psi`` at each ``m`` of ``schedule`` and solve the discrete problems."""
    from .diagnostics import monge_ampere_residual

    schedule = tuple(int(m) for m in schedule)
    if any(m < 3 for m in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be increasing with entries >= 3")
    solver = solver or SolverConfig()
    optimizer = optimizer or OptimizerConfig()
    targets, sols, ma = [], [], []
    for m in schedule:
        target = discretize_density(theta_s, psi, m)
        sol = solve_discrete(MinkowskiProblem(target, p, solver, optimizer))
        res = monge_ampere_residual(sol, theta_s, psi, p)
        targets.append(target)
        sols.append(sol)
        ma.append((float(np.mean(res)), float(np.max(res))))
    wd = [weak_distance(a, b) for a, b in zip(targets, targets[1:])]
    hd = [hausdorff_distance(centered(a.polygon), centered(b.polygon)) for a, b in zip(sols, sols[1:])]
    return DensityRun(schedule, targets, sols, wd, hd, ma)
