"""Counter-based sampling streams: determinism, prefixes, geometry."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from regcert.multimap import SearchRegion
from regcert import rng


def test_stream_reproducible():
    a = rng.stream(42, "probe", 3).random(8)
    b = rng.stream(42, "probe", 3).random(8)
    assert np.array_equal(a, b)


def test_stream_separates_labels_counters_seeds():
    base = rng.stream(42, "probe", 3).random(8)
    assert not np.array_equal(base, rng.stream(42, "probe", 4).random(8))
    assert not np.array_equal(base, rng.stream(42, "other", 3).random(8))
    assert not np.array_equal(base, rng.stream(43, "probe", 3).random(8))


def test_block_partition_covers_budget():
    for budget in (1, 511, 512, 513, 2000, 4096):
        sizes = [rng.block_size(budget, bi)
                 for bi in range(rng.block_count(budget))]
        assert sum(sizes) == budget
        assert all(0 < s <= rng.BLOCK for s in sizes)


def test_sphere_and_ball_geometry():
    gen = rng.stream(7, "geom", 0)
    S = rng.sphere_points(gen, 400, dim=3)
    assert np.allclose(np.linalg.norm(S, axis=1), 1.0, atol=1e-12)
    gen = rng.stream(7, "geom", 1)
    center = np.array([1.0, -2.0])
    B = rng.ball_points(gen, 400, center, 0.75)
    r = np.linalg.norm(B - center, axis=1)
    assert np.all(r <= 0.75 + 1e-12)
    # interior is actually filled, not just the shell
    assert np.min(r) < 0.25


def test_region_budget_prefix_property():
    box = np.array([[-1.0, 1.0], [0.0, 2.0]])
    region_small = SearchRegion(box, 5, 700, seed=11)
    region_large = SearchRegion(box, 5, 2500, seed=11)
    small = region_small.uniform_samples("draw", 700)
    large = region_large.uniform_samples("draw", 2500)
    assert np.array_equal(small, large[:700])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3000), st.integers(1, 3000))
def test_prefix_property_any_budgets(b1, b2):
    lo, hi = sorted((b1, b2))
    box = np.array([[0.0, 1.0]])
    region = SearchRegion(box, 5, hi, seed=3)
    big = region.uniform_samples("p", hi)
    small = SearchRegion(box, 5, lo, seed=3).uniform_samples("p", lo)
    assert np.array_equal(small, big[:lo])
