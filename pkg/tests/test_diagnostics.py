import math

import numpy as np
import pytest
from conftest import square
from oracles import square_log_capacity

from capmink import (
    MinkowskiProblem,
    discretize_density,
    monge_ampere_residual,
    rectangle,
    regular_polygon,
    solve_discrete,
    verify_all,
)
from capmink.diagnostics import (
    CHECKS,
    TOLERANCES,
    measure_centroid_residual,
    normal_arcs,
)

DOCUMENTED_CHECKS = (
    "maximum_principle",
    "pcap_positive",
    "capacity_routes",
    "star3_residual",
    "star2_chain",
    "measure_centroid",
    "measure_routes",
    "translation_capacity",
    "translation_measure",
    "dilation_capacity",
    "dilation_measure",
)


@pytest.fixture(scope="module")
def report_64gon():
    return verify_all(regular_polygon(64), 1.5)


@pytest.fixture(scope="module")
def report_square():
    return verify_all(square(), 2.0)


def test_check_names_snapshot(report_64gon):
    assert CHECKS == DOCUMENTED_CHECKS
    assert set(TOLERANCES) == set(CHECKS)
    names = [c.name for c in report_64gon.checks]
    assert names == list(DOCUMENTED_CHECKS)
    assert len(set(names)) == len(names)


def test_calibration_64gon(report_64gon):
    assert report_64gon.passed, report_64gon.table()


def test_square_log_capacity_report(report_square):
    assert report_square.passed, report_square.table()
    assert report_square.quantities["log_capacity"] == pytest.approx(square_log_capacity(), rel=0.01)


def test_thin_rectangle_chain():
    rep = verify_all(rectangle(1.0, 0.01), 2.0)
    assert rep["star2_chain"].passed
    assert rep["star3_residual"].passed


def test_deterministic(report_64gon):
    again = verify_all(regular_polygon(64), 1.5)
    assert again.to_dict(deterministic=True) == report_64gon.to_dict(deterministic=True)
    assert "seconds" not in report_64gon.to_dict(deterministic=True)


def test_table_lists_every_check(report_square):
    table = report_square.table()
    assert all(name in table for name in CHECKS)


def test_failed_check_is_isolated():
    # a needle-thin body drives the capacity routes apart; the other checks still run
    rep = verify_all(rectangle(1.0, 1e-3), 2.0)
    assert len(rep.checks) == len(CHECKS)
    assert all(not math.isnan(c.value) for c in rep.checks)


def test_normal_arcs_cover_circle():
    theta = np.sort(np.random.default_rng(0).uniform(0, 2 * math.pi, 9))
    _, widths = normal_arcs(theta)
    assert widths.sum() == pytest.approx(2 * math.pi, abs=1e-14)


def test_measure_centroid_residual():
    assert measure_centroid_residual([0.0, math.pi / 2], [1.0, 1.0]) == pytest.approx(math.sqrt(2) / 2)


@pytest.fixture(scope="module")
def density_solution():
    theta_s = np.linspace(0, 2 * math.pi, 720, endpoint=False)
    psi = np.ones_like(theta_s)
    mu = discretize_density(theta_s, psi, 16)
    return theta_s, psi, solve_discrete(MinkowskiProblem(mu, 1.5))


def test_residual_equals_measure_match(density_solution):
    theta_s, psi, sol = density_solution
    res = monge_ampere_residual(sol, theta_s, psi)
    # equal cells: the arc masses are exactly the target atoms
    np.testing.assert_allclose(res, sol.measure_match, rtol=1e-6, atol=1e-12)


def test_trace_route_is_small(density_solution):
    theta_s, psi, sol = density_solution
    assert monge_ampere_residual(sol, theta_s, psi, method="trace").max() <= 0.03


def test_unknown_route(density_solution):
    theta_s, psi, sol = density_solution
    with pytest.raises(ValueError):
        monge_ampere_residual(sol, theta_s, psi, method="bogus")


def test_report_round_trips_to_json(report_square):
    import json

    d = json.loads(json.dumps(report_square.to_dict()))
    assert d["pass"] is True and len(d["checks"]) == len(CHECKS)
