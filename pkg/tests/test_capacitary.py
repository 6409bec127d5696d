import itertools
import math

import numpy as np
import pytest
from conftest import pentagon, square
from oracles import central_difference_gradient, disk_capacity, square_log_capacity

from capmink import (
    SolverConfig,
    capacity_report,
    check_star2,
    check_star3,
    curvature_measure,
    hadamard_gradient,
    p_to_one_trend,
    pcap,
    polygon_from_support,
    rectangle,
    regular_polygon,
    solve_potential,
    transform,
)
from capmink.capacitary import InactiveNormal, SolutionMismatch
from capmink.geometry import body_metrics

P_VALUES = [1.3, 1.5, 1.8, 2.0]


def measure_centroid(P, weights):
    return np.linalg.norm(weights @ P.normal_vectors) / weights.sum()


def fd_gradient(P, p, sol):
    step = 1e-4 * body_metrics(P).diameter

    def cap(h):
        return solve_potential(polygon_from_support(P.theta, h), p, SolverConfig(), layout=sol.layout, warm=sol).capacity

    return central_difference_gradient(cap, P.supports, step)


def test_disk_capacity_p15():
    assert pcap(regular_polygon(128), 1.5) == pytest.approx(disk_capacity(1.5), rel=0.02)


def test_square_log_capacity():
    assert pcap(square(), 2.0) == pytest.approx(square_log_capacity(), rel=0.01)


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_capacity_routes_agree(p):
    P = pentagon()
    sol = solve_potential(P, p)
    routes = ["energy", "bem"] if p == 2.0 else ["energy", "flux"]
    a, b = (pcap(P, p, sol, method=m) for m in routes)
    assert a == pytest.approx(b, rel=0.02)


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_homogeneity(p):
    P, r = pentagon(), 2.0
    law = r if p == 2.0 else r ** (2 - p)
    assert pcap(transform(P, (0, 0), r), p) == pytest.approx(law * pcap(P, p), rel=5e-3)


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_translation_invariance(p):
    P = pentagon()
    Q = transform(P, (2.3, -0.7))
    assert pcap(Q, p) == pytest.approx(pcap(P, p), rel=5e-3)
    np.testing.assert_allclose(curvature_measure(Q, p).weights, curvature_measure(P, p).weights, rtol=5e-3)


@pytest.mark.parametrize("m", [3, 5, 8])
@pytest.mark.parametrize("p", [1.5, 2.0])
def test_regular_polygon_equal_weights(m, p):
    w = curvature_measure(regular_polygon(m), p).weights
    assert (w.max() - w.min()) / w.mean() <= 5e-3


@pytest.mark.parametrize("p", [1.3, 1.5, 2.0])
def test_measure_dilation_law(p):
    P, r = pentagon(), 2.0
    a = curvature_measure(P, p).weights
    b = curvature_measure(transform(P, (0, 0), r), p).weights
    np.testing.assert_allclose(b, r ** (1 - p) * a, rtol=1e-2)


@pytest.mark.parametrize("P", [pentagon(), square(), rectangle(1.0, 0.1), regular_polygon(7)], ids=["pentagon", "square", "thin", "heptagon"])
@pytest.mark.parametrize("p", [1.5, 2.0])
def test_measure_centroid_zero(P, p):
    sol = solve_potential(P, p)
    for method in ("variational", "trace"):
        w = curvature_measure(P, p, sol, method=method).weights
        assert measure_centroid(P, w) <= 1e-3


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_measure_routes_agree(p):
    P = pentagon()
    sol = solve_potential(P, p)
    a = curvature_measure(P, p, sol).weights
    b = curvature_measure(P, p, sol, method="trace").weights
    assert np.abs(a - b).sum() / b.sum() <= 0.02


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_hadamard_matches_finite_differences(p):
    P = pentagon()
    sol = solve_potential(P, p)
    g = hadamard_gradient(P, p, sol)
    np.testing.assert_allclose(g, fd_gradient(P, p, sol), rtol=1e-2)


def test_hadamard_symmetric_on_regular_polygon():
    g = hadamard_gradient(regular_polygon(6), 1.5)
    assert (g.max() - g.min()) / g.mean() <= 5e-3


def test_hadamard_rejects_zero_length_edge():
    axes = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2, math.pi / 4]
    P = polygon_from_support(axes, [1, 1, 1, 1, math.sqrt(2) - 5e-11])
    assert P.m == 5
    with pytest.raises(InactiveNormal):
        hadamard_gradient(P, 1.5)


def test_solution_for_other_polygon_rejected():
    sol = solve_potential(square(), 1.5, SolverConfig(elements=2000))
    with pytest.raises(SolutionMismatch):
        pcap(pentagon(), 1.5, sol)


def test_star3_disk():
    assert check_star3(regular_polygon(128), 1.5) <= 5e-3


def test_star3_square_log():
    sol = solve_potential(square(), 2.0)
    from capmink.capacitary import star3_sides
    from capmink.potential import trace_integrals

    lhs, rhs = star3_sides(square(), 2.0, trace_integrals(sol, 2.0), sol.capacity)
    assert rhs == pytest.approx(2 * math.pi)
    assert lhs == pytest.approx(2 * math.pi, rel=0.01)


def test_star3_pentagon():
    assert check_star3(pentagon(), 1.5) <= 0.01


def test_star2_disk_tight():
    P = regular_polygon(128)
    # equality case: the first link holds only up to discretization error
    chain = check_star2(P, 1.5, pcap(P, 1.5), rel_tol=0.02)
    assert chain.holds
    area_radius, cap_radius = chain.values[0], chain.values[1]
    assert cap_radius == pytest.approx(area_radius, rel=0.02)


def test_star2_thin_rectangle_segment_limit():
    P = rectangle(1.0, 0.01)
    chain = check_star2(P, 2.0, pcap(P, 2.0))
    assert chain.holds
    half_diam, twice_cap = chain.values[1], chain.values[2]
    # a segment of length L has 2 cap = L / 2, so the middle link is nearly tight
    assert (twice_cap - half_diam) / half_diam < 0.03


def test_star2_square_strict():
    P = square()
    chain = check_star2(P, 1.7, pcap(P, 1.7))
    assert all(link.holds and link.slack > 0 for link in chain.links)


def test_star2_detects_violation():
    chain = check_star2(square(), 1.5, 1e-3)
    assert not chain.holds


def test_disk_trend_closed_form():
    # pcap / perimeter of the unit disk is ((2 - p) / (p - 1))^(p - 1), which tends to 1
    ratios = [disk_capacity(p) / (2 * math.pi) for p in (1.1, 1.01, 1.001)]
    assert abs(ratios[-1] - 1) < 1e-2
    assert all(abs(b - 1) < abs(a - 1) for a, b in itertools.pairwise(ratios))


def test_square_trend_and_band():
    table = p_to_one_trend(square(), [1.3, 1.2, 1.1, 1.05])
    assert table.monotone
    assert table.rows[-1].rel_gap < 0.15


def test_disk_band_at_p105_follows_closed_form():
    # the disk exceeds a 15% band at p = 1.05 exactly: 19^0.05 - 1 = 0.159
    row = p_to_one_trend(regular_polygon(64), [1.05]).rows[0]
    assert row.rel_gap == pytest.approx(disk_capacity(1.05) / (2 * math.pi) - 1, abs=0.01)


def test_trend_rejects_increasing_p():
    with pytest.raises(ValueError):
        p_to_one_trend(square(), [1.1, 1.2])


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_capacity_report_bookkeeping(p):
    rep = capacity_report(pentagon(), p)
    assert rep.boundary_integral == pytest.approx(rep.edge_measures.weights.sum(), rel=1e-12)
    assert rep.tau_p == pytest.approx(2 * math.pi if p == 2.0 else (2 - p) / (p - 1))
    assert rep.star3_residual <= 0.01
    assert rep.star2_chain.holds
    assert set(rep.to_dict()) >= {"pcap", "edge_measures", "star3_residual", "star2_chain"}
