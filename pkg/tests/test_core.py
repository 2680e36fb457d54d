import numpy as np
import pytest

from subtail.core import (
    Dataset,
    DegenerateVectorError,
    EmbeddingBatch,
    RandomSource,
    ValidationError,
    cosine_similarity,
    euclidean_distance,
    unit_normalize,
    unit_normalize_rows,
)


class TestUnitNormalize:
    def test_scaling_identity(self):
        np.testing.assert_allclose(unit_normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-15)

    def test_already_unit(self):
        np.testing.assert_array_equal(unit_normalize([0.0, 0.0, 1.0]), [0.0, 0.0, 1.0])

    def test_diagonal(self):
        v = np.array([1.0, 1.0])
        expected = v / np.linalg.norm(v)
        np.testing.assert_allclose(unit_normalize(v), expected, atol=1e-15)
        np.testing.assert_allclose(unit_normalize(v), [0.70710678, 0.70710678], atol=1e-8)

    def test_zero_vector_raises(self):
        with pytest.raises(DegenerateVectorError, match="degenerate vector"):
            unit_normalize([0.0, 0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            unit_normalize([np.inf, 1.0])

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v = rng.standard_normal(rng.integers(1, 9))
            once = unit_normalize(v)
            twice = unit_normalize(once)
            assert np.max(np.abs(once - twice)) <= 1e-12


class TestCosineSimilarity:
    def test_identity(self):
        assert cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_antipodal(self):
        assert cosine_similarity([1.0, 0.0], [-1.0, 0.0]) == -1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_non_unit_rejected(self):
        with pytest.raises(ValidationError):
            cosine_similarity([2.0, 0.0], [1.0, 0.0])

    def test_clamped(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a = unit_normalize(rng.standard_normal(5))
            b = unit_normalize(rng.standard_normal(5))
            assert -1.0 <= cosine_similarity(a, b) <= 1.0


class TestEuclideanDistance:
    def test_three_four_five(self):
        assert euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0

    def test_identity_of_indiscernibles(self):
        a = np.array([1.3, -2.7, 0.4])
        assert euclidean_distance(a, a) == 0.0

    def test_unit_axes(self):
        assert abs(euclidean_distance([1.0, 0.0], [0.0, 1.0]) - 1.41421356) < 1e-8

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            euclidean_distance([1.0], [1.0, 2.0])


def test_distance_cosine_identity():
    # for unit vectors: d(a,b)^2 = 2 - 2 cos(a,b)
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = unit_normalize(rng.standard_normal(6))
        b = unit_normalize(rng.standard_normal(6))
        lhs = euclidean_distance(a, b) ** 2
        rhs = 2.0 - 2.0 * cosine_similarity(a, b)
        assert abs(lhs - rhs) < 1e-9


class TestRandomSource:
    def test_equal_seed_equal_draws(self):
        a = RandomSource(123, "stream").generator().random(10_000)
        b = RandomSource(123, "stream").generator().random(10_000)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RandomSource(123, "one").generator().random(100)
        b = RandomSource(123, "two").generator().random(100)
        assert not np.array_equal(a, b)

    def test_seeds_differ(self):
        a = RandomSource(1).generator().random(100)
        b = RandomSource(2).generator().random(100)
        assert not np.array_equal(a, b)

    def test_derive_is_deterministic(self):
        a = RandomSource(5).derive("x").derive("y")
        b = RandomSource(5).derive("x").derive("y")
        assert a == b
        np.testing.assert_array_equal(a.generator().random(10), b.generator().random(10))

    def test_bad_seed(self):
        with pytest.raises(ValidationError):
            RandomSource(-1)
        with pytest.raises(ValidationError):
            RandomSource(2**64)


class TestDataset:
    def test_create_counts(self):
        ds = Dataset.create(np.zeros((5, 3)), [0, 0, 1, 1, 1])
        np.testing.assert_array_equal(ds.class_counts, [2, 3])
        assert ds.num_samples == 5 and ds.num_classes == 2 and ds.dim == 3

    def test_missing_class_rejected(self):
        with pytest.raises(ValidationError, match="non-contiguous"):
            Dataset.create(np.zeros((3, 2)), [0, 0, 2])

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            Dataset.create(np.zeros((3, 2)), [0, 0, 0])

    def test_label_shape_rejected(self):
        with pytest.raises(ValidationError):
            Dataset.create(np.zeros((3, 2)), [0, 1])

    def test_subset_keeps_classes(self):
        ds = Dataset.create(np.arange(10).reshape(5, 2).astype(float), [0, 1, 0, 1, 1])
        sub = ds.subset(np.array([0, 1]))
        assert sub.num_samples == 2
        with pytest.raises(ValidationError):
            ds.subset(np.array([0, 2]))


class TestEmbeddingBatch:
    def test_valid(self):
        z = unit_normalize_rows(np.random.default_rng(0).standard_normal((4, 3)))
        batch = EmbeddingBatch(z, z.copy(), [0, 0, 1, 1])
        assert batch.size == 4

    def test_non_unit_rejected(self):
        z = np.ones((2, 2))
        with pytest.raises(ValidationError, match="unit-length"):
            EmbeddingBatch(z, z, [0, 1])

    def test_shape_mismatch_rejected(self):
        z = unit_normalize_rows(np.random.default_rng(0).standard_normal((4, 3)))
        with pytest.raises(ValidationError):
            EmbeddingBatch(z, z[:3], [0, 0, 1, 1])

    def test_cluster_ids_length(self):
        z = unit_normalize_rows(np.random.default_rng(0).standard_normal((2, 3)))
        with pytest.raises(ValidationError):
            EmbeddingBatch(z, z, [0, 1], cluster_ids=[0])
