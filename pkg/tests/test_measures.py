import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import circle_w1

from capmink import (
    SurfaceMeasure,
    discretize_density,
    project_to_centroid_zero,
    validate_measure,
    weak_distance,
)
from capmink.measures import (
    EmptyMeasure,
    InfeasibleProjection,
    MeasureError,
    NonpositiveDensity,
    cell_centers,
)

TRI = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
SAMPLES = np.linspace(0, 2 * math.pi, 720, endpoint=False)


def test_from_atoms_drops_zero_and_merges():
    mu = SurfaceMeasure.from_atoms([1.0, 0.5, 1.0 + 1e-12, 2.0], [1.0, 2.0, 3.0, 0.0])
    np.testing.assert_allclose(mu.theta, [0.5, 1.0])
    np.testing.assert_allclose(mu.weights, [2.0, 4.0])


def test_from_atoms_rejects_negative():
    with pytest.raises(MeasureError):
        SurfaceMeasure.from_atoms([0.0, 1.0], [1.0, -1.0])


def test_dict_round_trip_and_degrees():
    mu = SurfaceMeasure.from_atoms(TRI, [1, 2, 3])
    nu = SurfaceMeasure.from_dict(mu.to_dict())
    np.testing.assert_allclose(nu.theta, mu.theta)
    deg = SurfaceMeasure.from_dict({"atoms": [{"theta_deg": 90.0, "weight": 1.0}]})
    assert deg.theta[0] == pytest.approx(math.pi / 2)
    with pytest.raises(KeyError):
        SurfaceMeasure.from_dict({"atoms": [{"theta_deg": 90.0, "weight": 1.0}, {"theta_rad": 1.0, "weight": 1.0}]})


def test_square_normals_have_antipodal_pairs():
    rep = validate_measure(SurfaceMeasure.from_atoms([0, math.pi / 2, math.pi, 3 * math.pi / 2], [1, 1, 1, 1]), strict=True)
    assert rep.centroid_residual < 1e-15
    assert rep.has_antipodal_pair
    assert not rep.admissible


def test_single_antipodal_pair_is_inadmissible():
    rep = validate_measure(SurfaceMeasure.from_atoms([0.3, 0.3 + math.pi], [1, 1]))
    assert rep.centroid_residual < 1e-15
    assert rep.supported_on_equator and not rep.admissible
    assert "(0, 1)" in rep.reason()


def test_triangle_directions_admissible():
    rep = validate_measure(SurfaceMeasure.from_atoms(TRI, [1, 1, 1]), strict=True)
    assert rep.centroid_residual < 1e-15
    assert not rep.has_antipodal_pair
    assert rep.admissible


def test_unbalanced_measure():
    rep = validate_measure(SurfaceMeasure.from_atoms([0.0, math.pi / 2], [1, 1]))
    assert rep.centroid_residual == pytest.approx(math.sqrt(2))
    assert not rep.admissible
    assert "centroid" in rep.reason()


def test_empty_measure():
    with pytest.raises(EmptyMeasure):
        validate_measure(SurfaceMeasure.from_atoms([], []))


def test_equator_infimum_brute_force():
    mu = SurfaceMeasure.from_atoms([0.2, 1.9, 4.0], [1.0, 0.7, 1.2])
    grid, step = np.linspace(0, 2 * math.pi, 400001, retstep=True)
    brute = (np.abs(np.cos(grid[:, None] - mu.theta[None, :])) @ mu.weights).min()
    # the minimum sits on a kink, which the grid misses by at most step * total mass
    assert brute - step * mu.total <= validate_measure(mu).equator_infimum <= brute + 1e-12


def test_projection_fixes_balanced():
    mu = SurfaceMeasure.from_atoms(TRI, [1, 1, 1])
    np.testing.assert_allclose(project_to_centroid_zero(mu).weights, 1.0, atol=1e-15)


def test_projection_triangle_by_hand():
    mu = SurfaceMeasure.from_atoms(TRI, [1, 1, 1.3])
    np.testing.assert_allclose(project_to_centroid_zero(mu).weights, [1.1, 1.1, 1.1], atol=1e-14)


def test_projection_two_atoms_infeasible():
    with pytest.raises(InfeasibleProjection):
        project_to_centroid_zero(SurfaceMeasure.from_atoms([0.0, 1.0], [1, 1]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_projection_balances_random(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(4, 12))
    theta = np.sort(rng.uniform(0, 2 * math.pi, m))
    # spread the directions so a positive balanced measure exists
    theta = (theta + 2 * math.pi * np.arange(m) / m) % (2 * math.pi)
    mu = SurfaceMeasure.from_atoms(theta, rng.uniform(0.5, 2.0, m))
    try:
        nu = project_to_centroid_zero(mu)
    except InfeasibleProjection:
        return
    assert validate_measure(nu).centroid_residual <= 1e-12 * nu.total
    assert np.all(nu.weights > 0)


def test_projection_is_least_squares():
    # no bound is active here, so the projection is the orthogonal one onto {Z^T c = 0}
    mu = SurfaceMeasure.from_atoms([0.1, 1.4, 2.6, 3.9, 5.1], [1.0, 1.2, 0.9, 1.1, 1.3])
    Z = np.stack([np.cos(mu.theta), np.sin(mu.theta)], 1)
    expected = mu.weights - Z @ np.linalg.solve(Z.T @ Z, Z.T @ mu.weights)
    np.testing.assert_allclose(project_to_centroid_zero(mu).weights, expected, atol=1e-14)


def test_discretize_constant_m3():
    mu = discretize_density(SAMPLES, np.ones_like(SAMPLES), 3)
    np.testing.assert_allclose(mu.weights, 2 * math.pi / 3, rtol=1e-12)
    assert validate_measure(mu).centroid_residual < 1e-12


@pytest.mark.parametrize("m", [4, 8, 13, 32])
def test_discretize_constant_total(m):
    mu = discretize_density(SAMPLES, np.ones_like(SAMPLES), m)
    assert mu.total == pytest.approx(2 * math.pi, rel=1e-12)


def test_discretize_cosine_needs_projection():
    psi = 1 + 0.5 * np.cos(SAMPLES)
    mu = discretize_density(SAMPLES, psi, 64)
    assert validate_measure(mu).centroid_residual <= 1e-12 * mu.total
    assert mu.total == pytest.approx(2 * math.pi, rel=1e-6)
    # the raw cell masses carry a centroid of about pi/2 that the projection removes
    from capmink.measures import cell_integrals

    raw = cell_integrals(SAMPLES, psi, cell_centers(64), 2 * math.pi / 64)
    assert np.linalg.norm(raw @ np.stack([np.cos(cell_centers(64)), np.sin(cell_centers(64))], 1)) == pytest.approx(
        math.pi / 2, rel=1e-3
    )


def test_discretize_rejects_nonpositive():
    with pytest.raises(NonpositiveDensity):
        discretize_density(SAMPLES, np.zeros_like(SAMPLES), 8)


def test_cell_centers_offset():
    assert cell_centers(3)[0] == pytest.approx(math.pi / 3)
    # even counts avoid axis-aligned atoms
    assert np.all(np.abs(np.sin(2 * cell_centers(8))) > 1e-3)


def test_weak_distance_identity():
    mu = SurfaceMeasure.from_atoms(TRI, [1, 2, 3])
    assert weak_distance(mu, mu) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("delta", [1e-3, 0.05, 0.3])
def test_weak_distance_shifted_atom(delta):
    a = SurfaceMeasure.from_atoms([1.0], [0.7])
    b = SurfaceMeasure.from_atoms([1.0 + delta], [0.7])
    assert weak_distance(a, b) == pytest.approx(0.7 * delta, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_weak_distance_matches_transport_for_small_moves(seed):
    # small perturbations keep the optimal potential inside [-1, 1], where the
    # bounded-Lipschitz distance equals the transport distance
    rng = np.random.default_rng(seed)
    m = 6
    t1 = np.sort(rng.uniform(0, 2 * math.pi, m))
    w = rng.uniform(0.1, 0.3, m)
    t2 = t1 + rng.uniform(-0.05, 0.05, m)
    a, b = SurfaceMeasure.from_atoms(t1, w), SurfaceMeasure.from_atoms(t2, w)
    assert weak_distance(a, b) == pytest.approx(circle_w1(a.theta, a.weights, b.theta, b.weights), rel=1e-7, abs=1e-12)


def test_weak_distance_metric_axioms():
    rng = np.random.default_rng(7)
    ms = [SurfaceMeasure.from_atoms(rng.uniform(0, 6.28, 5), rng.uniform(0.2, 1, 5)) for _ in range(4)]
    for a in ms:
        for b in ms:
            assert weak_distance(a, b) == pytest.approx(weak_distance(b, a), abs=1e-12)
            for c in ms:
                assert weak_distance(a, c) <= weak_distance(a, b) + weak_distance(b, c) + 1e-12


def test_weak_distance_refinement_decreases():
    psi = 1 + 0.3 * np.sin(2 * SAMPLES)
    mus = [discretize_density(SAMPLES, psi, m) for m in (8, 16, 32, 64)]
    d = [weak_distance(a, b) for a, b in itertools.pairwise(mus)]
    assert all(y < x for x, y in itertools.pairwise(d))
