import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dscope import metrics


# -- accuracy / correlation ----------------------------------------------------


def test_accuracy_examples():
    logits = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 1.0], [5.0, 0.0]])
    assert metrics.accuracy(logits, [0, 1, 0, 1]) == 0.75  # row 2 ties to class 0
    assert metrics.accuracy(logits, [0, 1, 0, 0]) == 1.0
    assert metrics.accuracy(logits, [1, 0, 1, 1]) == 0.0


def test_pearson_hand_example():
    a = [1.0, 2.0, 3.0, 4.0]
    b = [2.0, 4.0, 6.0, 8.1]
    ma, mb = sum(a) / 4, sum(b) / 4
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    votes = np.column_stack([a, b])
    rep = metrics.superclass_correlation(votes, {0: 0, 1: 0})
    assert rep.values[0] == pytest.approx((num / den) ** 2, abs=1e-12)


def test_duplicate_and_negated_columns_give_one():
    col = np.random.default_rng(0).normal(size=40)
    votes = np.column_stack([col, col, -col])
    rep = metrics.superclass_correlation(votes, {0: 0, 1: 0, 2: 0})
    assert rep.values[0] == pytest.approx(1.0, abs=1e-12)


def test_zero_variance_pair_is_skipped_and_flagged():
    votes = np.column_stack([np.ones(5), np.arange(5.0), np.arange(5.0) ** 2])
    rep = metrics.superclass_correlation(votes, {0: 0, 1: 0, 2: 0})
    assert rep.skipped == [(0, 1), (0, 2)]
    assert 0 < rep.values[0] <= 1


def test_singleton_superclass_rejected():
    with pytest.raises(ValueError):
        metrics.superclass_correlation(np.ones((3, 2)), {0: 0, 1: 1})


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 100), st.floats(-100, 100))
def test_correlation_invariant_under_affine_column_rescale(seed, scale, shift):
    votes = np.random.default_rng(seed).normal(size=(30, 4))
    base = metrics.superclass_correlation(votes, {0: 0, 1: 0, 2: 1, 3: 1})
    votes[:, 1] = scale * votes[:, 1] + shift
    moved = metrics.superclass_correlation(votes, {0: 0, 1: 0, 2: 1, 3: 1})
    for k in base.values:
        assert moved.values[k] == pytest.approx(base.values[k], abs=1e-9)


# -- KDE -----------------------------------------------------------------------


def brute_density(points, h, x, y):
    total = 0.0
    for px, py in points:
        total += math.exp(-((x - px) ** 2 + (y - py) ** 2) / (2 * h * h))
    return total / (len(points) * 2 * math.pi * h * h)


def test_kde_matches_direct_sum():
    pts = np.random.default_rng(1).normal(size=(15, 2))
    grid = metrics.kde2d(pts, h=0.4, g=16)
    cx, cy = grid.centers()
    for r in (0, 5, 11):
        for c in (2, 8, 15):
            assert grid.density[r, c] == pytest.approx(brute_density(pts, 0.4, cx[c], cy[r]), rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_kde_mass_near_one(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(200, 2)) * rng.uniform(0.2, 3, size=2)
    grid = metrics.kde2d(pts)
    assert abs(grid.mass() - 1.0) < 0.02


def test_kde_extent_covers_points_plus_padding():
    pts = np.array([[0.0, 0.0], [2.0, 1.0]])
    grid = metrics.kde2d(pts, h=0.5)
    assert (grid.xmin, grid.xmax, grid.ymin, grid.ymax) == (-1.5, 3.5, -1.5, 2.5)


def test_single_point_peaks_at_nearest_cell_and_is_symmetric():
    grid = metrics.kde2d([[0.0, 0.0]], h=0.5, g=33)
    r, c = np.unravel_index(np.argmax(grid.density), grid.density.shape)
    assert (r, c) == (16, 16)
    np.testing.assert_allclose(grid.density, grid.density.T, rtol=1e-12)
    np.testing.assert_allclose(grid.density, grid.density[::-1, ::-1], rtol=1e-12)


def test_mirrored_points_give_mirrored_grid():
    pts = np.random.default_rng(3).normal(size=(40, 2))
    h = 0.3
    a = metrics.kde2d(pts, h=h, g=32, extent=(-4, 4, -4, 4))
    b = metrics.kde2d(pts * [-1, 1], h=h, g=32, extent=(-4, 4, -4, 4))
    np.testing.assert_allclose(b.density, a.density[:, ::-1], rtol=1e-10, atol=1e-300)


def test_kde_is_linear_in_point_multiset():
    rng = np.random.default_rng(4)
    p1, p2 = rng.normal(size=(7, 2)), rng.normal(size=(13, 2)) + 1
    ext = (-4.0, 5.0, -4.0, 5.0)
    d1 = metrics.kde2d(p1, 0.5, 32, ext).density
    d2 = metrics.kde2d(p2, 0.5, 32, ext).density
    both = metrics.kde2d(np.vstack([p1, p2]), 0.5, 32, ext).density
    np.testing.assert_allclose(both, (7 * d1 + 13 * d2) / 20, atol=1e-10)


def test_degenerate_extent_expands_and_warns():
    grid = metrics.kde2d(np.zeros((5, 2)))
    assert grid.warnings
    assert grid.xmax - grid.xmin > 1.0


def test_kde_argument_checks():
    with pytest.raises(ValueError):
        metrics.kde2d([[0.0, 0.0]], h=0.0)
    with pytest.raises(ValueError):
        metrics.kde2d([[0.0, 0.0]], g=8)


def test_scott_bandwidth():
    pts = np.random.default_rng(0).normal(size=(64, 2)) * [1.0, 2.0]
    sd = pts.std(axis=0)
    assert metrics.scott_bandwidth(pts) == pytest.approx(64 ** (-1 / 6) * math.sqrt((sd**2).mean()))


# -- class areas ---------------------------------------------------------------


def test_hdr_cells_counts_highest_cells_first():
    d = np.array([[0.5, 0.1], [0.3, 0.1]])
    assert metrics.hdr_cells(d, 0.5) == 1
    assert metrics.hdr_cells(d, 0.8) == 2
    assert metrics.hdr_cells(d, 0.81) == 3


def test_single_class_ratio_is_one():
    pts = np.random.default_rng(0).normal(size=(100, 2))
    assert metrics.class_area_ratio(pts, np.zeros(100, int), 0) == 1.0


def test_two_far_identical_classes_split_area():
    blob = np.random.default_rng(0).normal(size=(150, 2))
    pts = np.vstack([blob, blob + [40.0, 0.0]])
    labels = np.repeat([0, 1], 150)
    ratios = metrics.class_area_ratios(pts, labels)
    for v in ratios.values():
        assert abs(v - 0.5) <= 0.1


def test_collapsed_class_has_small_area():
    rng = np.random.default_rng(1)
    # pooled bandwidth shrinks as N^(-1/6); a dense cloud keeps the point class's blur small
    pts = np.vstack([rng.uniform(-5, 5, size=(2000, 2)), np.full((30, 2), 1.0)])
    labels = np.r_[np.zeros(2000, int), np.ones(30, int)]
    assert metrics.class_area_ratio(pts, labels, 1) < 0.1


def test_empty_class_rejected():
    with pytest.raises(ValueError):
        metrics.class_area_ratio(np.zeros((3, 2)), [0, 0, 0], 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 5), st.floats(0.05, 1.0))
def test_class_area_ratio_in_unit_interval(seed, classes, q):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(60, 2)) * rng.uniform(0.1, 5, size=2)
    labels = rng.integers(0, classes, size=60)
    for v in metrics.class_area_ratios(pts, labels, q=q, g=32).values():
        assert 0.0 <= v <= 1.0


# -- neighbourhoods ------------------------------------------------------------


def test_knn_table_matches_sorting_loop():
    pts = np.random.default_rng(2).normal(size=(30, 3))
    table = metrics.knn_table(pts, 4)
    for i, row in enumerate(table):
        d = [(float(np.sum((pts[i] - pts[j]) ** 2)), j) for j in range(30) if j != i]
        assert row.tolist() == [j for _, j in sorted(d)[:4]]


def test_knn_ties_go_to_lower_index():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert metrics.knn_table(pts, 3)[0].tolist() == [1, 2, 3]


def test_preservation_identity_and_isometry():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(80, 2))
    assert metrics.neighborhood_preservation(pts, pts, 10) == 1.0
    t = 0.7
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    moved = pts @ rot.T * [1, -1] + [3.0, -2.0]
    assert metrics.neighborhood_preservation(pts, moved, 10) == 1.0


def test_preservation_of_shuffled_coords_is_chance():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(400, 2))
    score = metrics.neighborhood_preservation(pts, pts[rng.permutation(400)], 10)
    assert abs(score - 10 / 399) < 0.015


def test_preservation_rejects_large_k():
    with pytest.raises(ValueError):
        metrics.neighborhood_preservation(np.zeros((5, 2)), np.zeros((5, 2)), 5)


def test_one_nn_accuracy_on_separated_groups():
    pts = np.array([[0, 0], [0, 0.1], [5, 5], [5, 5.1]], dtype=float)
    assert metrics.one_nn_accuracy(pts, [0, 0, 1, 1]) == 1.0
    assert metrics.one_nn_accuracy(pts, [0, 1, 0, 1]) == 0.0
