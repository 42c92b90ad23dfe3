"""Distance metrics, orderings, and the preceding-neighbor scan."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecchiagp import geo

latitudes = st.floats(min_value=-90.0, max_value=90.0, allow_nan=False)
longitudes = st.floats(min_value=-180.0, max_value=180.0, allow_nan=False)
plane_coords = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def brute_force_predecessors(locs, metric, m):
    """Exhaustive O(n^2) reference scan: per target, sort by (distance, index)."""
    n = len(locs)
    rows = []
    for i in range(m, n):
        keyed = sorted(
            (geo.pairwise_distance(locs[i], locs[j], metric), j) for j in range(i)
        )
        rows.append([j for _, j in keyed[:m]])
    return np.asarray(rows, dtype=np.int64)


class TestDistances:
    @pytest.mark.parametrize(
        "a, b, expected",
        [
            ((0.0, 0.0), (0.0, 0.0), 0.0),
            ((0.0, 0.0), (3.0, 4.0), 5.0),
            ((1.0, 1.0), (2.0, 2.0), math.sqrt(2.0)),
        ],
    )
    def test_euclidean_cases(self, a, b, expected):
        assert geo.euclidean_distance(a, b) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize(
        "a, b, expected",
        [
            ((12.0, 34.0), (12.0, 34.0), 0.0),
            ((0.0, 0.0), (180.0, 0.0), math.pi),
            ((0.0, 0.0), (0.0, 90.0), math.pi / 2.0),
        ],
    )
    def test_great_circle_unit_sphere(self, a, b, expected):
        assert geo.great_circle_distance(a, b, radius=1.0) == pytest.approx(expected, abs=1e-12)

    def test_great_circle_latitude_domain(self):
        with pytest.raises(ValueError):
            geo.great_circle_distance((0.0, 91.0), (0.0, 0.0))
        with pytest.raises(ValueError):
            geo.great_circle_distance((10.0, 20.0), (10.0, -90.5))

    def test_great_circle_default_radius_is_km(self):
        # one degree along the equator on the default sphere
        d = geo.great_circle_distance((0.0, 0.0), (1.0, 0.0))
        assert d == pytest.approx(geo.EARTH_RADIUS_KM * math.pi / 180.0, rel=1e-12)

    @given(x1=plane_coords, y1=plane_coords, x2=plane_coords, y2=plane_coords)
    @settings(max_examples=100, deadline=None)
    def test_euclidean_symmetric_nonnegative(self, x1, y1, x2, y2):
        d_ab = geo.euclidean_distance((x1, y1), (x2, y2))
        d_ba = geo.euclidean_distance((x2, y2), (x1, y1))
        assert d_ab == d_ba
        assert d_ab >= 0.0

    @given(lon1=longitudes, lat1=latitudes, lon2=longitudes, lat2=latitudes)
    @settings(max_examples=100, deadline=None)
    def test_great_circle_symmetric_bounded(self, lon1, lat1, lon2, lat2):
        d_ab = geo.great_circle_distance((lon1, lat1), (lon2, lat2), radius=1.0)
        d_ba = geo.great_circle_distance((lon2, lat2), (lon1, lat1), radius=1.0)
        assert d_ab == d_ba
        assert 0.0 <= d_ab <= math.pi + 1e-12

    def test_zero_iff_identical(self):
        assert geo.euclidean_distance((1.25, -3.5), (1.25, -3.5)) == 0.0
        assert geo.euclidean_distance((1.25, -3.5), (1.25, -3.5 + 1e-12)) > 0.0


class TestOrderings:
    def test_random_singleton(self):
        assert geo.random_ordering(1, seed=123).order.tolist() == [0]

    def test_random_deterministic(self):
        a = geo.random_ordering(5, seed=42)
        b = geo.random_ordering(5, seed=42)
        assert np.array_equal(a.order, b.order)
        c = geo.random_ordering(5, seed=43)
        assert sorted(c.order.tolist()) == [0, 1, 2, 3, 4]

    @given(n=st.integers(min_value=1, max_value=400), seed=st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_random_is_bijection(self, n, seed):
        perm = geo.random_ordering(n, seed)
        assert np.array_equal(np.sort(perm.order), np.arange(n))

    def test_morton_two_by_two(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert geo.morton_ordering(pts).order.tolist() == [0, 1, 2, 3]
        # same four cells presented shuffled recover the Z order
        shuffled = pts[[3, 0, 2, 1]]
        order = geo.morton_ordering(shuffled).order
        assert np.array_equal(shuffled[order], pts)

    def test_morton_singleton_and_identical(self):
        assert geo.morton_ordering(np.array([[0.4, 0.2]])).order.tolist() == [0]
        same = np.tile([3.0, 7.0], (6, 1))
        assert geo.morton_ordering(same).order.tolist() == list(range(6))

    def test_morton_degenerate_axis(self):
        # y collapses to cell 0 everywhere; order driven by x alone
        pts = np.array([[0.9, 5.0], [0.1, 5.0], [0.5, 5.0]])
        assert geo.morton_ordering(pts).order.tolist() == [1, 2, 0]

    def test_morton_x_gets_low_bits(self):
        # along x the code increments by 1 per cell, along y by 2
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        codes = geo.morton_codes(pts)
        assert codes[0] == 0
        assert codes[1] < codes[2]

    def test_morton_sixteen_bit_convention(self):
        # bounding-box extremes land on the all-even / all-odd bit masks
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        codes = geo.morton_codes(pts)
        assert codes[1] == 0x55555555  # 16 one-bits spread over even positions
        assert codes[2] == 0xAAAAAAAA  # same spread shifted onto odd positions
        assert codes[3] == 0xFFFFFFFF

    def test_morton_is_bijection(self):
        rng = np.random.default_rng(0)
        perm = geo.morton_ordering(rng.random((777, 2)))
        assert np.array_equal(np.sort(perm.order), np.arange(777))

    def test_permutation_validation(self):
        with pytest.raises(ValueError):
            geo.Permutation(np.array([0, 0, 2]))


class TestDataset:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            geo.Dataset(np.zeros((3, 2)), np.zeros(2))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            geo.Dataset(np.array([[0.0, np.nan]]), np.zeros(1))
        with pytest.raises(ValueError):
            geo.Dataset(np.zeros((1, 2)), np.array([np.inf]))

    def test_gcd_latitude_check(self):
        with pytest.raises(ValueError):
            geo.Dataset(np.array([[0.0, 95.0]]), np.zeros(1), geo.GreatCircle())

    def test_permute_roundtrip(self):
        rng = np.random.default_rng(3)
        data = geo.Dataset(rng.random((8, 2)), rng.standard_normal(8))
        perm = geo.random_ordering(8, seed=1)
        ordered = data.permute(perm)
        assert np.array_equal(ordered.locations[np.argsort(perm.order)], data.locations)


class TestNearestNeighbors:
    def test_collinear_line(self):
        locs = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        table = geo.nearest_neighbors(geo.Dataset(locs, np.zeros(4)), m=2)
        # target x=3 conditions on x=2 then x=1
        assert table.neighbors[1].tolist() == [2, 1]
        assert table.neighbors[0].tolist() == [1, 0]

    def test_forced_set_when_n_is_m_plus_one(self):
        rng = np.random.default_rng(5)
        locs = rng.random((7, 2))
        table = geo.nearest_neighbors(geo.Dataset(locs, np.zeros(7)), m=6)
        assert sorted(table.neighbors[0].tolist()) == [0, 1, 2, 3, 4, 5]

    def test_size_error(self):
        data = geo.Dataset(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            geo.nearest_neighbors(data, m=3)
        with pytest.raises(ValueError):
            geo.nearest_neighbors(data, m=0)

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(11)
        locs = rng.random((200, 2))
        data = geo.Dataset(locs, np.zeros(200))
        table = geo.nearest_neighbors(data, m=10)
        expected = brute_force_predecessors(locs, geo.Euclidean(), 10)
        assert np.array_equal(table.neighbors, expected)

    def test_matches_brute_force_great_circle(self):
        rng = np.random.default_rng(12)
        lon = rng.uniform(-30.0, 60.0, 120)
        lat = rng.uniform(-50.0, 50.0, 120)
        locs = np.column_stack([lon, lat])
        metric = geo.GreatCircle()
        table = geo.nearest_neighbors(geo.Dataset(locs, np.zeros(120), metric), m=7)
        expected = brute_force_predecessors(locs, metric, 7)
        assert np.array_equal(table.neighbors, expected)

    def test_grid_ties_break_by_smaller_index(self):
        # integer grid: massed exact ties, every one must resolve by index
        g = np.arange(12.0)
        locs = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
        data = geo.Dataset(locs, np.zeros(len(locs)))
        table = geo.nearest_neighbors(data, m=8)
        expected = brute_force_predecessors(locs, geo.Euclidean(), 8)
        assert np.array_equal(table.neighbors, expected)

    def test_schedule_independence(self):
        from vecchiagp import parallel

        rng = np.random.default_rng(13)
        data = geo.Dataset(rng.random((300, 2)), np.zeros(300))
        base = geo.nearest_neighbors(data, m=9).neighbors
        parallel.set_num_threads(3)
        try:
            threaded = geo.nearest_neighbors(data, m=9).neighbors
        finally:
            parallel.set_num_threads(1)
        assert np.array_equal(base, threaded)

    def test_lists_sorted_by_distance(self):
        rng = np.random.default_rng(14)
        locs = rng.random((80, 2))
        data = geo.Dataset(locs, np.zeros(80))
        table = geo.nearest_neighbors(data, m=5)
        for row, i in zip(table.neighbors, range(5, 80)):
            dists = [geo.euclidean_distance(locs[i], locs[j]) for j in row]
            assert dists == sorted(dists)
            assert all(j < i for j in row)
            assert len(set(row.tolist())) == 5


class TestNearestPoints:
    def test_unrestricted_search_matches_oracle(self):
        rng = np.random.default_rng(15)
        train = rng.random((90, 2))
        query = rng.random((25, 2))
        got = geo.nearest_points(query, train, geo.Euclidean(), m=6)
        for q in range(25):
            keyed = sorted(
                (geo.euclidean_distance(query[q], train[j]), j) for j in range(90)
            )
            assert got[q].tolist() == [j for _, j in keyed[:6]]
