from __future__ import annotations

import numpy as np
import pytest

from mops.diversity import (
    DegenerateHullError,
    GridSpec,
    ProjectionError,
    bin_counts,
    bins_in_hull,
    breadth_score,
    convex_hull,
    density_score,
    density_stats,
    diversity_report,
    polygon_area,
    project_2d,
)
from mops.dedup import StubEmbedder
from mops.testkit import oracle_bin_stats, oracle_hull_area


# -- convex hull ------------------------------------------------------------------


def test_square_with_center_has_four_hull_vertices():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)]
    hull = convex_hull(pts)
    assert not hull.degenerate
    assert len(hull.vertices) == 4
    assert polygon_area(hull.vertices) == pytest.approx(1.0)


def test_collinear_points_are_degenerate_with_zero_area():
    hull = convex_hull([(0, 0), (1, 1), (2, 2)])
    assert hull.degenerate
    assert breadth_score([(0, 0), (1, 1), (2, 2)]) == 0.0


def test_hull_vertices_are_counter_clockwise():
    rng = np.random.RandomState(3)
    hull = convex_hull(rng.standard_normal((40, 2)))
    v = hull.vertices
    signed = 0.5 * float(
        np.dot(v[:, 0], np.roll(v[:, 1], -1)) - np.dot(np.roll(v[:, 0], -1), v[:, 1])
    )
    assert signed > 0


def test_every_input_point_is_inside_or_on_hull():
    rng = np.random.RandomState(7)
    pts = rng.standard_normal((200, 2))
    hull = convex_hull(pts)
    assert all(hull.contains(float(x), float(y)) for x, y in pts)


def test_hull_area_matches_exhaustive_oracle_on_random_sets():
    rng = np.random.RandomState(11)
    for trial in range(10):
        pts = rng.standard_normal((100, 2)) * rng.uniform(0.5, 20)
        hull = convex_hull(pts)
        assert polygon_area(hull.vertices) == pytest.approx(
            oracle_hull_area(pts), abs=1e-9, rel=1e-9
        ), f"trial {trial}"


def test_hull_area_matches_oracle_on_500_points():
    pts = np.random.RandomState(13).uniform(-5, 5, size=(500, 2))
    assert polygon_area(convex_hull(pts).vertices) == pytest.approx(
        oracle_hull_area(pts), abs=1e-9
    )


# -- breadth -----------------------------------------------------------------------


def test_breadth_of_unit_right_triangle_is_exactly_half():
    assert breadth_score([(0, 0), (1, 0), (0, 1)]) == 0.5


def test_breadth_of_square_with_interior_points_is_exactly_four():
    pts = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (0.5, 1.5), (1.9, 0.1)]
    assert breadth_score(pts) == 4.0


def test_breadth_warns_on_degenerate(caplog):
    with caplog.at_level("WARNING"):
        score = breadth_score([(0, 0), (1, 1)])
    assert score == 0.0
    assert any("degenerate" in rec.message for rec in caplog.records)


def test_breadth_matches_monte_carlo_estimate_within_one_percent():
    from matplotlib.path import Path as MplPath

    rng = np.random.RandomState(5)
    pts = rng.standard_normal((60, 2))
    hull = convex_hull(pts)
    area = polygon_area(hull.vertices)

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    samples = rng.uniform(lo, hi, size=(1_000_000, 2))
    inside = MplPath(hull.vertices).contains_points(samples, radius=1e-9)
    box_area = float(np.prod(hi - lo))
    estimate = box_area * inside.mean()
    assert abs(estimate - area) / area < 0.01


# -- grid and density -----------------------------------------------------------------


def test_density_zero_for_one_point_per_bin_full_square():
    m = 10
    xs = [0.05 + 0.1 * k for k in range(m)]
    pts = [(x, y) for x in xs for y in xs]  # 100 points, one per bin
    hull, grid, counts, mask, density = density_stats(pts, m)
    assert mask.all()
    assert counts.sum() == len(pts)
    assert (counts == 1).all()
    assert density == 0.0


def test_density_corner_cluster_matches_hand_count_oracle():
    # 16 points clustered inside one corner cell of a [0,1]^2 grid whose hull
    # is the full square: counts {16, 0 x 15}, population std = sqrt(15)
    m = 4
    rng = np.random.RandomState(2)
    cluster = rng.uniform(0.01, 0.24, size=(16, 2))
    square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    grid = GridSpec(m=m, xmin=0.0, xmax=1.0, ymin=0.0, ymax=1.0)
    hull = convex_hull(square)

    counts = bin_counts(cluster, grid)
    mask = bins_in_hull(grid, hull)
    assert mask.all()
    production_std = float(np.std(counts[mask]))

    oracle_counts, oracle_bins, oracle_std = oracle_bin_stats(
        cluster, m, (0.0, 1.0, 0.0, 1.0), square
    )
    assert counts.sum() == 16
    assert {b: c for b, c in oracle_counts.items() if c} == {(0, 0): 16}
    assert sorted(oracle_bins) == sorted((i, j) for i in range(m) for j in range(m))
    assert production_std == pytest.approx(oracle_std, abs=1e-12)
    assert production_std == pytest.approx(np.sqrt(15.0), abs=1e-12)


def test_density_full_pipeline_matches_oracle_on_random_points():
    rng = np.random.RandomState(9)
    for trial in range(5):
        pts = rng.uniform(-3, 7, size=(rng.randint(30, 120), 2))
        hull, grid, counts, mask, density = density_stats(pts, 10)
        _, oracle_bins, oracle_std = oracle_bin_stats(
            pts, 10, (grid.xmin, grid.xmax, grid.ymin, grid.ymax), hull.vertices
        )
        assert counts.sum() == len(pts)
        assert sorted(map(tuple, np.argwhere(mask))) == sorted(oracle_bins), f"trial {trial}"
        assert density == pytest.approx(oracle_std, abs=1e-12), f"trial {trial}"


def test_bin_counts_sum_to_n_always():
    rng = np.random.RandomState(21)
    for _ in range(20):
        pts = rng.standard_normal((rng.randint(5, 200), 2)) * rng.uniform(0.1, 50)
        grid = GridSpec.from_points(pts, 10)
        assert bin_counts(pts, grid).sum() == len(pts)


def test_every_point_falls_in_exactly_one_bin_with_closed_top_edges():
    grid = GridSpec(m=4, xmin=0.0, xmax=1.0, ymin=0.0, ymax=1.0)
    assert grid.bin_of(0.0, 0.0) == (0, 0)
    assert grid.bin_of(1.0, 1.0) == (3, 3)  # top/right edges closed
    assert grid.bin_of(0.25, 0.25) == (1, 1)  # lower edges open into the next bin
    assert grid.bin_of(0.2499999, 0.75) == (0, 3)


def test_density_zero_iff_in_hull_counts_equal():
    rng = np.random.RandomState(33)
    for _ in range(10):
        pts = rng.uniform(0, 1, size=(50, 2))
        _, _, counts, mask, density = density_stats(pts, 5)
        selected = counts[mask]
        assert (density == 0.0) == bool((selected == selected[0]).all())


def test_density_rejects_degenerate_and_small_m():
    with pytest.raises(DegenerateHullError):
        density_score([(0, 0), (1, 1), (2, 2), (3, 3)], 10)
    with pytest.raises(ValueError):
        density_score([(0, 0), (1, 0), (0, 1)], 1)


# -- invariances (the post-projection geometry stage) ------------------------------------


def test_translation_and_scaling_invariances():
    rng = np.random.RandomState(17)
    pts = rng.standard_normal((80, 2)) * 3.0
    s = 2.5
    shift = np.array([13.7, -4.2])
    scaled = pts * s
    shifted = pts + shift

    breadth = breadth_score(pts)
    assert abs(breadth_score(shifted) - breadth) / breadth < 1e-9
    assert abs(breadth_score(scaled) - s * s * breadth) / (s * s * breadth) < 1e-9

    density = density_score(pts, 10)
    assert density_score(shifted, 10) == pytest.approx(density, rel=1e-12)
    assert density_score(scaled, 10) == pytest.approx(density, rel=1e-12)


# -- projection ---------------------------------------------------------------------------


def test_projection_preserves_cardinality():
    vectors = np.random.RandomState(1).standard_normal((1000, 16))
    coords = project_2d(vectors, seed=0, perplexity=30.0, iterations=250)
    assert coords.shape == (1000, 2)
    assert np.isfinite(coords).all()


def test_projection_is_deterministic_for_fixed_seed():
    vectors = np.random.RandomState(2).standard_normal((100, 8))
    a = project_2d(vectors, seed=42, perplexity=10.0)
    b = project_2d(vectors, seed=42, perplexity=10.0)
    assert np.array_equal(a, b)


def test_projection_precondition_on_point_count():
    vectors = np.random.RandomState(3).standard_normal((10, 8))
    with pytest.raises(ProjectionError, match="perplexity"):
        project_2d(vectors, seed=0, perplexity=30.0)


# -- corpus-level report -------------------------------------------------------------------


def test_report_single_seed_equals_that_seed(tmp_path):
    texts = [f"premise about topic {i}" for i in range(24)]
    report = diversity_report(texts, StubEmbedder(dim=12), seeds=[4], m=5, perplexity=3.0, iterations=300)
    assert report.size == 24
    assert report.seeds == [4]
    assert report.breadth == report.per_seed[0]["breadth"]
    assert report.density == report.per_seed[0]["density"]


def test_report_averages_across_five_seeds():
    texts = [f"premise about topic {i}" for i in range(24)]
    report = diversity_report(
        texts, StubEmbedder(dim=12), seeds=[1, 2, 3, 4, 5], m=5, perplexity=3.0, iterations=300
    )
    assert len(report.per_seed) == 5
    assert report.breadth == pytest.approx(np.mean([r["breadth"] for r in report.per_seed]))
    assert report.density == pytest.approx(np.mean([r["density"] for r in report.per_seed]))


def test_report_requires_a_seed():
    with pytest.raises(ValueError):
        diversity_report(["a", "b"], StubEmbedder(), seeds=[])


def test_multi_seed_breadth_ranking_is_stable_between_corpora():
    # a corpus of 36 distinct premises vs. the same 4 premises repeated:
    # whichever corpus projects wider must do so for every seed
    distinct = [f"a premise about completely different topic {i}" for i in range(36)]
    repeated = [f"one of four premises, variant {i % 4}" for i in range(36)]
    embedder = StubEmbedder(dim=12)
    rep_a = diversity_report(distinct, embedder, seeds=[1, 2, 3], m=5, perplexity=3.0, iterations=300)
    rep_b = diversity_report(repeated, embedder, seeds=[1, 2, 3], m=5, perplexity=3.0, iterations=300)
    signs = {
        np.sign(a["breadth"] - b["breadth"]) for a, b in zip(rep_a.per_seed, rep_b.per_seed)
    }
    assert len(signs) == 1
