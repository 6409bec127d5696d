"""Independent reference values for the test suite.

Nothing here calls into the package; each oracle is a separate derivation
(closed forms, conformal maps, ODE shooting or brute-force differences).
"""

from __future__ import annotations

import math
from functools import cache

import numpy as np
import sympy as sym
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq


def disk_capacity(p: float, radius: float = 1.0) -> float:
    """Capacity of the disk: ``2 pi k^(p-1) R^(2-p)`` with ``k = (2-p)/(p-1)``; ``R`` at ``p = 2``."""
    if p == 2.0:
        return radius
    k = (2.0 - p) / (p - 1.0)
    return 2.0 * math.pi * k ** (p - 1.0) * radius ** (2.0 - p)


def disk_boundary_gradient(p: float, radius: float = 1.0) -> float:
    """``|grad u|`` on the circle of radius ``R``: ``k / R`` (``1 / R`` at ``p = 2``)."""
    if p == 2.0:
        return 1.0 / radius
    return (2.0 - p) / (p - 1.0) / radius


def disk_balance_radius(p: float) -> float:
    """Radius whose disk has curvature density 1: ``((2-p)/(p-1))^(p/(p-1))``."""
    return ((2.0 - p) / (p - 1.0)) ** (p / (p - 1.0))


def regular_polygon_log_capacity(n: int, circumradius: float) -> float:
    """Logarithmic capacity of the regular ``n``-gon.

    The exterior map ``f(w) = C w 2F1(-2/n, -1/n; 1 - 1/n; w^-n)`` sends the
    unit circle onto the polygon with a vertex at ``f(1) = C Gamma(1-1/n)
    Gamma(1+2/n) / Gamma(1+1/n)`` (Gauss summation); the capacity is ``C``.
    """
    g = math.gamma
    return circumradius * g(1.0 + 1.0 / n) / (g(1.0 - 1.0 / n) * g(1.0 + 2.0 / n))


def square_log_capacity(side: float = 1.0) -> float:
    """``Gamma(1/4)^2 / (4 pi^(3/2))`` times the side."""
    return side * math.gamma(0.25) ** 2 / (4.0 * math.pi**1.5)


def _rectangle_sides(alpha: float) -> tuple[float, float]:
    # exterior Schwarz-Christoffel map with prevertices exp(+-i alpha), -exp(-+i alpha)
    # and unit constant; |f'(e^{it})| integrated over the arcs gives the side lengths
    z = np.exp(1j * np.array([alpha, math.pi - alpha, math.pi + alpha, -alpha]))

    def speed(t):
        w = np.exp(1j * t)
        return float(np.abs(np.prod(np.sqrt(1.0 - z / w))))

    s_right = quad(speed, -alpha, alpha, limit=200)[0]
    s_top = quad(speed, alpha, math.pi - alpha, limit=200)[0]
    return s_right, s_top


def rectangle_log_capacity(width: float, height: float) -> float:
    """Logarithmic capacity of a ``width x height`` rectangle by a conformal map."""
    ratio = height / width  # the side crossing the positive real axis has length ``height``

    def mismatch(alpha):
        a, b = _rectangle_sides(alpha)
        return math.log(a / b) - math.log(ratio)

    alpha = brentq(mismatch, 1e-9, math.pi / 2 - 1e-9, xtol=1e-15)
    right, _ = _rectangle_sides(alpha)
    return height / right


@cache
def _angular_ode():
    # u = r^lam f(phi); div(|grad u|^(p-2) grad u) = 0 in polar coordinates, solved for f''
    r, phi, lam, p = sym.symbols("r phi lam p", positive=True)
    f = sym.Function("f")
    u = r**lam * f(phi)
    ur, up = sym.diff(u, r), sym.diff(u, phi) / r
    a = (ur**2 + up**2) ** ((p - 2) / 2)
    div = sym.diff(r * a * ur, r) / r + sym.diff(a * up, phi) / r
    f0, f1, f2 = sym.symbols("f0 f1 f2")
    expr = div.subs(sym.Derivative(f(phi), (phi, 2)), f2).subs(sym.Derivative(f(phi), phi), f1).subs(f(phi), f0)
    expr = sym.simplify(expr.subs(r, 1))
    sol = sym.solve(expr, f2)[0]
    return sym.lambdify((f0, f1, lam, p), sol, "math")


def sector_exponent(p: float, opening: float) -> float:
    """Exponent ``lam`` of the positive ``p``-harmonic ``r^lam f(phi)`` vanishing on both sides of a sector.

    Shooting: integrate the angular equation from ``f(0) = 0, f'(0) = 1`` and
    find ``lam`` for which the first zero of ``f`` sits at the given opening.
    """
    rhs = _angular_ode()

    def first_zero(lam):
        def ode(t, y):
            return [y[1], rhs(y[0], y[1], lam, p)]

        def hit(t, y):
            return y[0]

        hit.terminal, hit.direction = True, -1
        res = solve_ivp(ode, (0.0, 4.0 * math.pi), [0.0, 1.0], events=hit, rtol=1e-12, atol=1e-14, first_step=1e-6)
        ev = [t for t in res.t_events[0] if t > 1e-6]
        return ev[0] if ev else 4.0 * math.pi

    return brentq(lambda lam: first_zero(lam) - opening, 0.03, 3.0, xtol=1e-12)


def central_difference_gradient(capacity_of, supports: np.ndarray, step: float) -> np.ndarray:
    """``(C(h + s e_j) - C(h - s e_j)) / (2 s)`` for every component."""
    out = np.empty(len(supports))
    for j in range(len(supports)):
        e = np.zeros(len(supports))
        e[j] = step
        out[j] = (capacity_of(supports + e) - capacity_of(supports - e)) / (2.0 * step)
    return out


def circle_w1(theta1, w1, theta2, w2) -> float:
    """Earth mover's distance on the circle for equal-mass atomic measures.

    ``min_c int_0^{2 pi} |F(t) - c| dt`` with ``F`` the cumulative difference
    of the two measures and ``c`` its weighted median.
    """
    t = np.concatenate([np.mod(theta1, 2 * math.pi), np.mod(theta2, 2 * math.pi)])
    w = np.concatenate([w1, -np.asarray(w2, dtype=float)])
    order = np.argsort(t)
    t, w = t[order], w[order]
    F = np.cumsum(w)
    lengths = np.diff(np.concatenate([t, [t[0] + 2 * math.pi]]))
    cands = np.concatenate([F, [0.0]])
    return float(min(np.sum(lengths * np.abs(F - c)) for c in cands))
