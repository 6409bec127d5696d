"""Capacity, capacitary curvature measure, shape gradient and identity checks.

Two independent routes give the per-edge weights ``mu_j = int_{F_j} |grad u|^p``:

* ``"variational"``: the derivative of the discrete capacity in the support
  numbers.  The nodal values are frozen and only the mesh moves (envelope
  property), and ``d pcap / d h_j = (p - 1) mu_j`` (``p < 2``) or
  ``d log cap / d h_j = mu_j / (2 pi)`` (``p = 2``) is inverted for ``mu_j``.
  This is the exact gradient of the discrete problem, so it is what the
  inverse solver uses.
* ``"trace"``: quadrature of the recovered boundary gradient.

The identity ``sum_j h_j mu_j = tau_p pcap`` (``2 pi`` at ``p = 2``) is an
Euler relation for the homogeneous discrete energy, so the variational route
satisfies it to rounding; :func:`check_star3` therefore uses the trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bem import IllConditioned, solve_harmonic_bem
from .config import SolverConfig, check_p, tau
from .geometry import TOL_LEN_REL, ConvexPolygon, body_metrics
from .measures import SurfaceMeasure
from .potential import (
    PotentialSolution,
    energy_at,
    far_exponent,
    solve_potential,
    trace_integrals,
)

FD_REL = 1e-5  # support perturbation for the variational measure, relative to the mean width


class BackendUnavailable(RuntimeError):
    pass


class InactiveNormal(ValueError):
    pass


class SolutionMismatch(ValueError):
    pass


def _check_solution(P: ConvexPolygon, p: float, sol: PotentialSolution) -> None:
    if sol.p != p:
        raise SolutionMismatch(f"solution was computed for p = {sol.p}, not {p}")
    if sol.polygon.m != P.m or not (
        np.allclose(sol.polygon.theta, P.theta, atol=1e-12) and np.allclose(sol.polygon.supports, P.supports, rtol=1e-12, atol=1e-14)
    ):
        raise SolutionMismatch("solution belongs to a different polygon")


def _solution(P: ConvexPolygon, p: float, sol: PotentialSolution | None, cfg: SolverConfig | None) -> PotentialSolution:
    if sol is None:
        return solve_potential(P, p, cfg)
    _check_solution(P, p, sol)
    return sol


def pcap(
    P: ConvexPolygon,
    p: float,
    sol: PotentialSolution | None = None,
    cfg: SolverConfig | None = None,
    method: str = "auto",
) -> float:
    """``p``-capacity (``p < 2``) or logarithmic capacity (``p = 2``).

    Methods
    -------
    ``"flux"`` (default for ``p < 2``)
        ``int |grad u|^(p-1)`` over the boundary from the trace.
    ``"energy"``
        From the minimum of the discrete energy (``p J*`` for ``p < 2``;
        ``R_out exp(-mean of u on the outer circle)`` for ``p = 2``).
    ``"bem"`` (default for ``p = 2``)
        ``exp(gamma)`` from the boundary integral solver.

    Raises
    ------
    BackendUnavailable
        ``"bem"`` requested and the panel system is ill-conditioned; with
        ``"auto"`` the energy route is used instead.
    """
    p = check_p(p)
    cfg = cfg or SolverConfig()
    if method == "auto":
        if p == 2.0:
            try:
                return pcap(P, p, sol, cfg, "bem")
            except BackendUnavailable:
                return pcap(P, p, sol, cfg, "energy")
        method = "flux"
    if method == "bem":
        if p != 2.0:
            raise ValueError("the boundary integral backend covers p = 2 only")
        try:
            return solve_harmonic_bem(P, cfg).capacity
        except IllConditioned as exc:
            raise BackendUnavailable(str(exc)) from exc
    sol = _solution(P, p, sol, cfg)
    if method == "energy":
        return sol.capacity
    if method == "flux":
        if p == 2.0:
            raise ValueError("the flux route gives a capacity only for p < 2")
        return float(trace_integrals(sol, p - 1.0, cfg).sum())
    raise ValueError(f"unknown capacity method {method!r}")


def variational_weights(sol: PotentialSolution) -> np.ndarray:
    """Per-edge ``mu_j`` as the support-number derivative of the discrete capacity."""
    P = sol.polygon
    p = sol.p
    h = P.supports
    d = FD_REL * sol.mesh.frame.scale
    out = np.empty(P.m)
    for j in range(P.m):
        e = np.zeros(P.m)
        e[j] = d
        Jp, Rp = energy_at(sol, h + e)
        Jm, Rm = energy_at(sol, h - e)
        dJ = (Jp - Jm) / (2.0 * d)
        if p == 2.0:
            out[j] = 2.0 * math.pi * ((math.log(Rp) - math.log(Rm)) / (2.0 * d) + dJ / math.pi)
        else:
            out[j] = p * dJ / (p - 1.0)
    return out


def curvature_measure(
    P: ConvexPolygon,
    p: float,
    sol: PotentialSolution | None = None,
    cfg: SolverConfig | None = None,
    method: str = "variational",
) -> SurfaceMeasure:
    """Atoms ``mu_j`` at the edge normals, ``mu_j = int_{F_j} |grad u|^p``."""
    p = check_p(p)
    sol = _solution(P, p, sol, cfg)
    if method == "variational":
        w = variational_weights(sol)
    elif method == "trace":
        w = trace_integrals(sol, p, cfg)
    else:
        raise ValueError(f"unknown measure method {method!r}")
    return SurfaceMeasure(P.theta.copy(), w)


def hadamard_gradient(
    P: ConvexPolygon,
    p: float,
    sol: PotentialSolution | None = None,
    cfg: SolverConfig | None = None,
    method: str = "variational",
) -> np.ndarray:
    """Derivative of the capacity in the support numbers.

    ``(p - 1) mu_j`` for ``p < 2`` and ``cap mu_j / (2 pi)`` for ``p = 2``,
    with the discrete energy capacity of ``sol``.

    Raises
    ------
    InactiveNormal
        If an edge has (numerically) zero length: the capacity is then only
        one-sided differentiable in that support number.
    """
    p = check_p(p)
    scale = float(np.abs(P.supports).max())
    short = np.flatnonzero(P.edge_lengths <= 1e3 * TOL_LEN_REL * scale)
    if len(short):
        raise InactiveNormal(f"edges {short.tolist()} have zero length")
    sol = _solution(P, p, sol, cfg)
    mu = curvature_measure(P, p, sol, cfg, method).weights
    if p == 2.0:
        return sol.capacity * mu / (2.0 * math.pi)
    return (p - 1.0) * mu


def star3_sides(P: ConvexPolygon, p: float, mu: np.ndarray, cap: float) -> tuple[float, float]:
    """``(sum_j (h_j - zeta_j . c) mu_j, tau_p cap)`` with ``c`` the area centroid (``2 pi`` at ``p = 2``)."""
    c = body_metrics(P).centroid
    h = P.supports - P.normal_vectors @ c
    lhs = float(h @ mu)
    rhs = 2.0 * math.pi if p == 2.0 else far_exponent(p) * cap
    return lhs, rhs


def check_star3(P: ConvexPolygon, p: float, sol: PotentialSolution | None = None, cfg: SolverConfig | None = None) -> float:
    """Relative residual of ``sum_j h_j mu_j = tau_p pcap`` with trace weights and the energy capacity."""
    p = check_p(p)
    sol = _solution(P, p, sol, cfg)
    lhs, rhs = star3_sides(P, p, trace_integrals(sol, p, cfg), sol.capacity)
    return abs(lhs - rhs) / rhs


@dataclass(frozen=True)
class ChainLink:
    left: str
    right: str
    slack: float  # right - left
    holds: bool


@dataclass(frozen=True)
class Star2Chain:
    """Ordered values of the isocapacitary / isodiametric chain and its links."""

    names: tuple
    values: tuple
    links: tuple

    @property
    def holds(self) -> bool:
        return all(link.holds for link in self.links)

    def to_dict(self) -> dict:
        return {
            "quantities": [{"name": n, "value": float(v)} for n, v in zip(self.names, self.values)],
            "links": [{"left": k.left, "right": k.right, "slack": float(k.slack), "holds": bool(k.holds)} for k in self.links],
            "holds": self.holds,
        }


def check_star2(P: ConvexPolygon, p: float, cap: float, rel_tol: float = 0.0) -> Star2Chain:
    """Evaluate the isocapacitary chain for capacity ``cap``.

    ``p < 2``: ``sqrt(A/pi) <= (cap / (2 pi k^(p-1)))^(1/(2-p)) <= diam/2``.
    ``p = 2``: ``sqrt(A/pi) <= diam/2 <= 2 cap <= diam``.
    A link holds when ``right >= left - rel_tol * |left|``.
    """
    p = check_p(p)
    met = body_metrics(P)
    r_area = math.sqrt(met.area / math.pi)
    if p == 2.0:
        names = ("area_radius", "half_diameter", "twice_log_capacity", "diameter")
        values = (r_area, met.diameter / 2.0, 2.0 * cap, met.diameter)
    else:
        k = far_exponent(p)
        r_cap = (cap / (2.0 * math.pi * k ** (p - 1.0))) ** (1.0 / (2.0 - p))
        names = ("area_radius", "capacity_radius", "half_diameter")
        values = (r_area, r_cap, met.diameter / 2.0)
    links = tuple(
        ChainLink(names[i], names[i + 1], values[i + 1] - values[i], values[i + 1] >= values[i] - rel_tol * abs(values[i]))
        for i in range(len(values) - 1)
    )
    return Star2Chain(names, tuple(float(v) for v in values), links)


@dataclass(frozen=True)
class TrendRow:
    p: float
    pcap: float
    perimeter: float
    rel_gap: float


@dataclass(frozen=True)
class TrendTable:
    rows: tuple
    monotone: bool  # rel_gap decreases along the list

    def to_dict(self) -> dict:
        return {"rows": [vars(r) for r in self.rows], "monotone": self.monotone}


def p_to_one_trend(P: ConvexPolygon, ps, cfg: SolverConfig | None = None, method: str = "auto") -> TrendTable:
    """Capacities along a decreasing list of ``p`` in ``[1.05, 1.5]`` next to the perimeter."""
    ps = [check_p(p) for p in ps]
    if any(p > 1.5 for p in ps) or any(b >= a for a, b in zip(ps, ps[1:])):
        raise ValueError("p list must be strictly decreasing within [1.05, 1.5]")
    per = body_metrics(P).perimeter
    rows = []
    for p in ps:
        c = pcap(P, p, None, cfg, method)
        rows.append(TrendRow(p, c, per, abs(c - per) / per))
    gaps = [r.rel_gap for r in rows]
    return TrendTable(tuple(rows), all(b < a for a, b in zip(gaps, gaps[1:])))


@dataclass(frozen=True)
class CapacityReport:
    p: float
    tau_p: float
    pcap: float
    pcap_method: str
    energy_capacity: float
    edge_measures: SurfaceMeasure
    boundary_integral: float  # int |grad u|^p over the boundary, same bookkeeping as edge_measures
    trace_measures: SurfaceMeasure
    star3_residual: float
    star2_chain: Star2Chain
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "tau_p": self.tau_p,
            "pcap": self.pcap,
            "pcap_method": self.pcap_method,
            "energy_capacity": self.energy_capacity,
            "edge_measures": self.edge_measures.to_dict(),
            "boundary_integral": self.boundary_integral,
            "trace_measures": self.trace_measures.to_dict(),
            "star3_residual": self.star3_residual,
            "star2_chain": self.star2_chain.to_dict(),
            **self.extra,
        }


def capacity_report(
    P: ConvexPolygon, p: float, sol: PotentialSolution | None = None, cfg: SolverConfig | None = None
) -> CapacityReport:
    p = check_p(p)
    cfg = cfg or SolverConfig()
    sol = _solution(P, p, sol, cfg)
    method = "bem" if p == 2.0 else "flux"
    try:
        cap = pcap(P, p, sol, cfg, method)
    except BackendUnavailable:
        method, cap = "energy", sol.capacity
    mu = curvature_measure(P, p, sol, cfg)
    tr = trace_integrals(sol, p, cfg)
    lhs, rhs = star3_sides(P, p, tr, sol.capacity)
    return CapacityReport(
        p=p,
        tau_p=tau(p),
        pcap=cap,
        pcap_method=method,
        energy_capacity=sol.capacity,
        edge_measures=mu,
        boundary_integral=float(np.sum(mu.weights)),
        trace_measures=SurfaceMeasure(P.theta.copy(), tr),
        star3_residual=abs(lhs - rhs) / rhs,
        star2_chain=check_star2(P, p, cap),
    )
