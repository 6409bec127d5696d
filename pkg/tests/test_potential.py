import math

import numpy as np
import pytest
from conftest import pentagon, square
from oracles import disk_boundary_gradient, disk_capacity, sector_exponent

from capmink import (
    SolverConfig,
    analytic_disk,
    polygon_from_support,
    rectangle,
    regular_polygon,
    solve_harmonic_bem,
    solve_potential,
)
from capmink.potential import NewtonDivergence, corner_exponent

# lower bound of |grad u| on the boundary for convex fixtures inside the unit disk, p in {1.5, 2}
GRADIENT_FLOOR = 0.5


def boundary_l1_error(sol, exact):
    num = den = 0.0
    for tr in sol.boundary_gradient:
        num += np.trapezoid(np.abs(tr.grad - exact), tr.x)
        den += exact * (tr.x[-1] - tr.x[0])
    return num / den


def inscribed_fixtures():
    return [
        regular_polygon(3, 0.5),
        regular_polygon(6, 0.85),
        rectangle(1.2, 1.2),
        rectangle(1.9, 0.3),
        polygon_from_support([0.1, 1.3, 2.4, 3.6, 5.0], [0.5, 0.4, 0.55, 0.45, 0.5]),
    ]


@pytest.mark.parametrize("p", [1.3, 1.5, 1.8, 2.0])
def test_analytic_disk_matches_oracle(p):
    d = analytic_disk(p, 1.7)
    assert d.capacity == pytest.approx(disk_capacity(p, 1.7), rel=1e-14)
    assert d.gradient_norm(1.7) == pytest.approx(disk_boundary_gradient(p, 1.7), rel=1e-14)
    assert float(d.value(1.7)) == pytest.approx(0.0, abs=1e-15)


def test_analytic_disk_examples():
    d = analytic_disk(1.5)
    assert d.gradient_norm(1.0) == pytest.approx(1.0)
    assert d.capacity == pytest.approx(2 * math.pi)
    assert analytic_disk(2.0).capacity == pytest.approx(1.0)
    assert analytic_disk(1.5, 2.0).capacity == pytest.approx(2 * math.sqrt(2) * math.pi)


@pytest.mark.parametrize(
    "p,opening",
    [(2.0, 1.5 * math.pi), (1.5, 1.5 * math.pi), (1.3, 1.2 * math.pi), (1.8, 1.9 * math.pi), (1.5, math.pi), (1.1, 1.7 * math.pi)],
)
def test_corner_exponent_against_shooting(p, opening):
    assert corner_exponent(p, opening) == pytest.approx(sector_exponent(p, opening), abs=1e-9)


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_disk_gradient(p):
    sol = solve_potential(regular_polygon(128), p, SolverConfig())
    assert boundary_l1_error(sol, disk_boundary_gradient(p)) <= 0.02


def test_disk_error_decreases_under_refinement():
    errs = []
    for m, n in ((32, 5000), (64, 10000), (128, 20000)):
        sol = solve_potential(regular_polygon(m), 1.5, SolverConfig(elements=n))
        errs.append(boundary_l1_error(sol, 1.0))
    assert errs[0] > errs[1] > errs[2]


def test_square_corner_singularity():
    sol = solve_potential(square(), 2.0)
    tr = sol.boundary_gradient[0]
    near = (tr.x > 1e-3) & (tr.x < 3e-2)
    slope = np.polyfit(np.log(tr.x[near]), np.log(tr.grad[near]), 1)[0]
    assert slope == pytest.approx(corner_exponent(2.0, 1.5 * math.pi) - 1.0, abs=0.05)
    assert slope == pytest.approx(-1.0 / 3.0, abs=0.05)


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_maximum_principle_and_dirichlet(p):
    sol = solve_potential(pentagon(), p, SolverConfig(elements=5000))
    assert np.all(sol.u[sol.mesh.inner] == 0.0)
    assert sol.maximum_principle_violation() <= 1e-8
    if p < 2:
        assert sol.u.max() <= 1.0 + 1e-8


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_boundary_gradient_floor(p):
    lows = [min(t.grad.min() for t in solve_potential(P, p).boundary_gradient) for P in inscribed_fixtures()]
    assert min(lows) > GRADIENT_FLOOR


def test_fem_and_bem_gradients_agree():
    P = square()
    sol = solve_potential(P, 2.0)
    bem = solve_harmonic_bem(P)
    tr = sol.boundary_gradient[0]
    own = bem.edge == 0
    x = np.linalg.norm(bem.midpoints[own] - P.vertices[0], axis=1)
    keep = (x > 1e-3) & (x < 1.0 - 1e-3)
    g_bem = bem.boundary_gradient[own][keep]
    g_fem = np.interp(x[keep], tr.x, tr.grad)
    w = bem.lengths[own][keep]
    assert np.sum(np.abs(g_fem - g_bem) * w) / np.sum(g_bem * w) <= 0.02


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_truncation_insensitivity(p):
    P = square()
    caps = [solve_potential(P, p, SolverConfig(truncation_factor=t)).capacity for t in (10.0, 20.0)]
    assert caps[1] == pytest.approx(caps[0], rel=5e-3)


def test_warm_start_reuses_solution():
    P = pentagon()
    cold = solve_potential(P, 1.5)
    warm = solve_potential(P, 1.5, warm=cold)
    assert warm.newton_iters < cold.newton_iters
    assert warm.capacity == pytest.approx(cold.capacity, rel=1e-9)


def test_newton_divergence_carries_history():
    with pytest.raises(NewtonDivergence) as info:
        solve_potential(pentagon(), 1.2, SolverConfig(newton_max=1, elements=2000))
    assert len(info.value.history) >= 1
