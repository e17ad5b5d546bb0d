"""Gridded measures: lifts, weak residuals, projections, centroids and CSV."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occrelax import (Domain, Grid, GriddedMeasure, TestBasis, centroid, concentrate, integrate,
                      occupation_lift, profile_is_constant, projection_profile, read_measure_csv,
                      weak_residual, write_measure_csv)
from occrelax.measure import snapping_bound

UNIT = Domain("interval", (0.0, 1.0))


def _split_measure(nx=16):
    """dx (x) delta_0 (x) (delta_-1 + delta_1)/2 with boundary atoms at y = 0."""
    g = Grid.regular(UNIT, [[-1, 1]], [[-1, 1]], nx, 3, 3)
    w = np.zeros(g.shape)
    w[:, 1, 0] = w[:, 1, 2] = g.cell_volume / 2
    b = np.zeros((g.nb, 3))
    b[:, 1] = g.b_weight
    return GriddedMeasure(g, w, b)


def test_lift_of_zero():
    g = Grid.regular(UNIT, [[-1, 1]], [[-1, 1]], 10, 3, 3)
    mu = occupation_lift(lambda x: np.zeros(len(x)), g)
    assert mu.mass == pytest.approx(1.0, abs=1e-15)
    assert mu.weights[:, 1, 1].sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(projection_profile(mu) == pytest.approx(1.0))


def test_lift_of_identity():
    g = Grid.regular(UNIT, [[0, 1]], [[0, 2]], 8, 17, 3)
    mu = occupation_lift(lambda x: x[:, 0], g)
    i, j, k = np.nonzero(mu.weights)
    assert np.all(g.z[k, 0] == 1.0)
    assert np.allclose(g.y[j, 0], g.x[i, 0], atol=1 / 32 + 1e-12)
    assert mu.mass == pytest.approx(1.0, abs=1e-15)


def test_lift_out_of_box():
    g = Grid.regular(UNIT, [[0, 1]], [[-1, 1]], 8, 3, 3)
    with pytest.raises(ValueError):
        occupation_lift(lambda x: 2 + x[:, 0], g)


def test_weak_residual_first_order():
    res = []
    for N in (8, 16, 32, 64):
        g = Grid.regular(UNIT, [[0, 1]], [[-2, 2]], N, N + 1, 4 * N + 1)
        res.append(weak_residual(occupation_lift(lambda x: x[:, 0], g), TestBasis(g)))
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.allclose(ratios, 2.0, rtol=1e-9)


def test_weak_residual_symmetric_split():
    mu = _split_measure()
    assert weak_residual(mu, TestBasis(mu.grid)) <= 1e-12


def test_zero_measure_flagged_by_mass():
    g = Grid.regular(UNIT, [[-1, 1]], [[-1, 1]], 8, 3, 3)
    mu = GriddedMeasure.zeros(g)
    assert weak_residual(mu, TestBasis(g)) == 0.0
    assert not mu.is_normalized()


def test_projection_profile_violation():
    g = Grid.regular(UNIT, [[-1, 1]], [[-1, 1]], 8, 3, 3)
    mu = occupation_lift(lambda x: np.zeros(len(x)), g)
    w = mu.weights.copy()
    w[:4] *= 2
    assert profile_is_constant(mu)
    assert not profile_is_constant(GriddedMeasure(g, w, mu.boundary))


def test_two_lift_mixture_profile():
    from occrelax import two_curve_measure
    assert np.allclose(projection_profile(two_curve_measure(10)), 1.0, atol=1e-14)


def test_negative_weights_rejected():
    g = Grid.regular(UNIT, [[-1, 1]], [[-1, 1]], 4, 3, 3)
    w = np.zeros(g.shape)
    w[0, 0, 0] = -1
    with pytest.raises(ValueError):
        GriddedMeasure(g, w, np.zeros((g.nb, 3)))


def test_centroid_examples():
    mu = _split_measure()
    cf = centroid(mu)
    assert np.all(cf.Z[:, 1, 0] == 0.0)
    assert np.all(np.isnan(cf.Z[:, 0, 0]))  # empty fibres have no centroid
    g = Grid.with_axes(UNIT, 2, [np.array([0.0])], [np.array([0.0, 1.0, 3.0])])
    w = np.zeros(g.shape)
    w[:, 0, 0] = g.cell_volume / 3
    w[:, 0, 2] = 2 * g.cell_volume / 3
    assert centroid(GriddedMeasure(g, w, np.zeros((g.nb, 1)))).Z[0, 0, 0] == pytest.approx(2.0, abs=1e-15)
    lift = occupation_lift(lambda x: np.zeros(len(x)), Grid.regular(UNIT, [[-1, 1]], [[-1, 1]], 6, 3, 3))
    assert np.all(centroid(lift).Z[:, 1, 0] == 0.0)


def test_concentrate_double_well():
    mu = _split_measure()
    well = lambda x, y, z: np.minimum(np.abs(z[:, 0] - 1), np.abs(z[:, 0] + 1))
    sq = lambda x, y, z: z[:, 0] ** 2
    bar = concentrate(mu)
    assert integrate(mu, well) == 0.0
    assert integrate(bar, well) == pytest.approx(1.0, abs=1e-15)
    assert integrate(mu, sq) == pytest.approx(1.0, abs=1e-15)
    assert integrate(bar, sq) == 0.0
    assert np.array_equal(concentrate(bar).weights, bar.weights)  # idempotent


def test_concentrate_preserves_affine_integrals():
    rng = np.random.default_rng(1)
    g = Grid.regular(UNIT, [[-1, 1]], [[-2, 2]], 6, 4, 9)
    w = rng.random(g.shape) * (rng.random(g.shape) < 0.3)
    mu = GriddedMeasure(g, w, np.zeros((g.nb, 4)))
    bar = concentrate(mu)
    f = lambda x, y, z: 1.0 + 2 * y[:, 0] - 3 * z[:, 0]
    assert abs(integrate(bar, f) - integrate(mu, f)) <= 3 * snapping_bound(g) * mu.mass + 1e-12
    assert np.allclose(bar.xy_marginal(), mu.xy_marginal())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_jensen_for_square(seed):
    rng = np.random.default_rng(seed)
    g = Grid.regular(UNIT, [[-1, 1]], [[-2, 2]], 5, 3, 9)
    w = rng.random(g.shape) * (rng.random(g.shape) < 0.4)
    mu = GriddedMeasure(g, w, np.zeros((g.nb, 3)))
    sq = lambda x, y, z: (z ** 2).sum(axis=1)
    h = snapping_bound(g)
    # moving each centroid by at most h changes |Z|^2 by at most 2|Z|h + h^2
    eps = (2 * 2.0 * h + h * h) * mu.mass
    assert integrate(concentrate(mu), sq) <= integrate(mu, sq) + eps


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    g = Grid.regular(Domain("disk", (1.0,)), [[-1, 1]], [[-1, 1], [-1, 1]], 6, 5, 3)
    w = rng.random(g.shape) * (rng.random(g.shape) < 0.2) / 7
    b = rng.random((g.nb, 5)) * (rng.random((g.nb, 5)) < 0.3)
    mu = GriddedMeasure(g, w, b)
    p, q = tmp_path / "m.csv", tmp_path / "b.csv"
    write_measure_csv(mu, str(p), str(q))
    nu = read_measure_csv(str(p), str(q))
    assert np.array_equal(nu.weights, mu.weights)
    assert np.array_equal(nu.boundary, mu.boundary)
    assert np.array_equal(nu.grid.x, mu.grid.x)
    assert np.array_equal(nu.grid.z, mu.grid.z)


def test_grid_invariants():
    g = Grid.regular(Domain("disk", (1.0,)), [[-1, 1]], [[-1, 1], [-1, 1]], 12, 5, 3)
    assert np.all(Domain("disk", (1.0,)).contains(g.x))
    assert g.cell_volume.sum() == pytest.approx(np.pi, rel=1e-12)
    for a in g.y_axes + g.z_axes:
        assert np.all(np.diff(a) > 0)
    with pytest.raises(ValueError):
        Grid.with_axes(UNIT, 4, [np.array([0.0, 0.0])], [np.array([0.0])])
