import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavyfed import (
    AggregatorSpec,
    InvalidConfig,
    TooFewVectors,
    aggregate,
    bulyan,
    coord_median,
    coord_trimmed_mean,
    geometric_median,
    krum,
    krum_index,
    mean,
    norm_trimmed_mean,
)
from heavyfed.aggregation import trim_count


def vec(*values):
    return [np.array([v], dtype=float) for v in values]


def random_vectors(seed, m=9, d=4, scale=1.0):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(d) * scale for _ in range(m)]


class TestTrimCount:
    def test_examples(self):
        assert trim_count(0.2, 5) == 1
        assert trim_count(0.25, 10) == 3
        assert trim_count(0.0, 10) == 0

    def test_float_noise_near_integer(self):
        # 0.07 * 100 overshoots 7.0 in binary; the ceiling must not jump to 8
        assert trim_count(0.07, 100) == 7


class TestCoordTrimmedMean:
    def test_hand_sorted_example(self):
        out = coord_trimmed_mean(vec(1, 2, 3, 4, 5), beta=0.2)
        assert out[0] == pytest.approx(3.0)

    def test_zero_trim_is_plain_mean(self):
        vectors = random_vectors(0)
        assert np.array_equal(coord_trimmed_mean(vectors, 0.0), mean(vectors))

    def test_identical_vectors(self):
        v = np.array([2.0, -1.0, 0.5])
        assert np.allclose(coord_trimmed_mean([v] * 6, 0.3), v)

    def test_over_trim(self):
        with pytest.raises(TooFewVectors):
            coord_trimmed_mean(vec(1, 2, 3), beta=0.4)  # k = 2 removes everything

    def test_output_within_coordinate_range(self):
        vectors = random_vectors(1, m=11, d=5, scale=3.0)
        out = coord_trimmed_mean(vectors, 0.2)
        U = np.array(vectors)
        assert np.all(out >= U.min(axis=0) - 1e-12)
        assert np.all(out <= U.max(axis=0) + 1e-12)


class TestNormTrimmedMean:
    def test_drops_largest_norms(self):
        vectors = [np.array([1.0, 0.0]), np.array([0.0, 2.0]), np.array([10.0, 0.0])]
        out = norm_trimmed_mean(vectors, beta=1 / 3)
        assert np.allclose(out, np.array([0.5, 1.0]))

    def test_zero_trim_is_plain_mean(self):
        vectors = random_vectors(2)
        assert np.array_equal(norm_trimmed_mean(vectors, 0.0), mean(vectors))

    def test_positive_scaling_equivariance(self):
        vectors = random_vectors(3)
        scaled = [4.5 * v for v in vectors]
        assert np.allclose(norm_trimmed_mean(scaled, 0.25), 4.5 * norm_trimmed_mean(vectors, 0.25))

    def test_over_trim(self):
        with pytest.raises(TooFewVectors):
            norm_trimmed_mean(vec(1), beta=0.4999)  # k = 1 removes the only vector


class TestCoordMedian:
    def test_odd(self):
        assert coord_median(vec(1, 5, 100))[0] == 5.0

    def test_even(self):
        assert coord_median(vec(1, 2, 3, 100))[0] == 2.5

    def test_identical(self):
        v = np.array([1.0, -2.0])
        assert np.array_equal(coord_median([v] * 4), v)

    def test_output_within_coordinate_range(self):
        vectors = random_vectors(4, m=8, d=3, scale=5.0)
        out = coord_median(vectors)
        U = np.array(vectors)
        assert np.all(out >= U.min(axis=0)) and np.all(out <= U.max(axis=0))


class TestGeometricMedian:
    def test_single_vector(self):
        v = np.array([3.0, -1.0])
        assert np.array_equal(geometric_median([v]), v)

    def test_equilateral_triangle(self):
        pts = [
            np.array([1.0, 0.0]),
            np.array([-0.5, np.sqrt(3) / 2]),
            np.array([-0.5, -np.sqrt(3) / 2]),
        ]
        assert np.allclose(geometric_median(pts, tol=1e-10), [0.0, 0.0], atol=1e-8)

    def test_objective_no_worse_than_mean(self):
        def objective(y, pts):
            return sum(np.linalg.norm(y - p) for p in pts)

        for seed in range(100):
            pts = random_vectors(seed, m=7, d=3, scale=2.0)
            gm = geometric_median(pts)
            assert objective(gm, pts) <= objective(mean(pts), pts) + 1e-9

    def test_coincident_point_safeguard(self):
        # an input point that is also the current iterate must not break it
        pts = [np.zeros(2), np.array([1.0, 0.0]), np.array([-1.0, 0.0]), np.zeros(2)]
        out = geometric_median(pts)
        assert np.allclose(out, [0.0, 0.0], atol=1e-6)

    def test_all_identical(self):
        v = np.array([2.0, 2.0])
        assert np.allclose(geometric_median([v] * 5), v)


class TestKrum:
    def test_identical_vectors(self):
        v = np.array([1.0, 2.0])
        assert np.array_equal(krum([v] * 5, f=0), v)

    def test_outlier_rejected(self):
        rng = np.random.default_rng(0)
        cluster = [rng.normal(0, 0.1, 3) for _ in range(3)]
        outlier = np.full(3, 100.0)
        vectors = cluster + [outlier]
        # brute-force score oracle
        def score(i):
            dists = sorted(
                float(np.sum((vectors[i] - vectors[j]) ** 2)) for j in range(4) if j != i
            )
            return sum(dists[: 4 - 0 - 2])

        expected = min(range(4), key=lambda i: (score(i), i))
        assert krum_index(vectors, f=0) == expected
        assert expected != 3
        assert np.array_equal(krum(vectors, f=0), vectors[expected])

    def test_output_is_an_input(self):
        vectors = random_vectors(5, m=8)
        out = krum(vectors, f=2)
        assert any(np.array_equal(out, v) for v in vectors)

    def test_too_few(self):
        with pytest.raises(TooFewVectors):
            krum(vec(1, 2, 3), f=1)
        with pytest.raises(InvalidConfig):
            krum(vec(1, 2, 3, 4), f=-1)


class TestBulyan:
    def test_identical_vectors(self):
        v = np.array([0.5, -0.5])
        assert np.allclose(bulyan([v] * 7, f=1), v)

    def test_f_zero_is_mean(self):
        vectors = random_vectors(6, m=5)
        assert np.allclose(bulyan(vectors, f=0), mean(vectors), atol=1e-12)

    def test_outlier_within_cluster_range(self):
        rng = np.random.default_rng(1)
        cluster = [rng.normal(0, 0.5, 4) for _ in range(6)]
        vectors = cluster + [np.full(4, 50.0)]
        out = bulyan(vectors, f=1)
        U = np.array(cluster)
        assert np.all(out >= U.min(axis=0) - 1e-12)
        assert np.all(out <= U.max(axis=0) + 1e-12)

    def test_too_few(self):
        with pytest.raises(TooFewVectors):
            bulyan(random_vectors(0, m=6), f=1)  # needs 4f + 3 = 7


class TestMean:
    def test_singleton(self):
        v = np.array([1.0, 2.0])
        assert np.array_equal(mean([v]), v)

    def test_opposite_vectors_cancel(self):
        v = np.array([3.0, -4.0])
        assert np.array_equal(mean([v, -v]), np.zeros(2))

    def test_scaling_linearity(self):
        vectors = random_vectors(7)
        assert np.allclose(mean([2.0 * v for v in vectors]), 2.0 * mean(vectors))

    def test_empty(self):
        with pytest.raises(TooFewVectors):
            mean([])


AGGREGATORS = [
    ("mean", lambda vs: mean(vs)),
    ("coord_trimmed", lambda vs: coord_trimmed_mean(vs, 0.2)),
    ("norm_trimmed", lambda vs: norm_trimmed_mean(vs, 0.2)),
    ("coord_median", lambda vs: coord_median(vs)),
    ("geo_median", lambda vs: geometric_median(vs)),
    ("krum", lambda vs: krum(vs, 1)),
    ("bulyan", lambda vs: bulyan(vs, 1)),
]


class TestSharedInvariants:
    @pytest.mark.parametrize("name,rule", AGGREGATORS, ids=[n for n, _ in AGGREGATORS])
    def test_permutation_invariance(self, name, rule):
        vectors = random_vectors(10, m=9, d=4)
        perm = np.random.default_rng(0).permutation(9)
        base = rule(vectors)
        shuffled = rule([vectors[i] for i in perm])
        assert np.allclose(base, shuffled, atol=1e-11)

    @pytest.mark.parametrize(
        "rule",
        [
            lambda vs: mean(vs),
            lambda vs: coord_trimmed_mean(vs, 0.2),
            lambda vs: coord_median(vs),
            lambda vs: geometric_median(vs, tol=1e-12),
        ],
        ids=["mean", "coord_trimmed", "coord_median", "geo_median"],
    )
    def test_translation_equivariance(self, rule):
        vectors = random_vectors(11, m=7, d=3)
        shift = np.array([5.0, -2.0, 0.25])
        assert np.allclose(rule([v + shift for v in vectors]), rule(vectors) + shift, atol=1e-6)

    def test_krum_selection_is_translation_invariant(self):
        vectors = random_vectors(12, m=8, d=3)
        shift = np.full(3, 17.0)
        assert krum_index(vectors, 1) == krum_index([v + shift for v in vectors], 1)

    def test_trim_free_rules_agree_exactly(self):
        vectors = random_vectors(13, m=6, d=5)
        assert np.array_equal(coord_trimmed_mean(vectors, 0.0), mean(vectors))
        assert np.array_equal(norm_trimmed_mean(vectors, 0.0), mean(vectors))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_trimmed_mean_permutation_property(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(5, 12))
        vectors = [rng.standard_normal(3) * 10 for _ in range(m)]
        perm = rng.permutation(m)
        a = coord_trimmed_mean(vectors, 0.2)
        b = coord_trimmed_mean([vectors[i] for i in perm], 0.2)
        assert np.allclose(a, b, atol=1e-11)


class TestDispatch:
    def test_aggregate_routes_by_kind(self):
        vectors = random_vectors(14, m=7)
        assert np.array_equal(aggregate(AggregatorSpec(kind="mean"), vectors), mean(vectors))
        assert np.array_equal(
            aggregate(AggregatorSpec(kind="coord_trimmed", beta=0.2), vectors),
            coord_trimmed_mean(vectors, 0.2),
        )
        assert np.array_equal(
            aggregate(AggregatorSpec(kind="krum", f=1), vectors), krum(vectors, 1)
        )
        assert np.array_equal(
            aggregate(AggregatorSpec(kind="mkrum", f=1), vectors), krum(vectors, 1)
        )

    def test_spec_validation(self):
        with pytest.raises(InvalidConfig):
            AggregatorSpec(kind="average")
        with pytest.raises(InvalidConfig):
            AggregatorSpec(beta=0.5)
        with pytest.raises(InvalidConfig):
            AggregatorSpec(f=-1)
