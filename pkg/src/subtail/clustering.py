"""Capacity-capped sub-clustering of each class in the embedding space.

Head classes are split into sub-clusters of roughly tail-class size: the
capacity U = max(min class count, delta) bounds every cluster, and each
class c gets m_c = ceil(n_c / U) clusters. Assignment is greedy: the
globally most-similar (sample, open center) pair wins each round, and a
center closes once it reaches capacity. Centers are re-estimated from
their members for a fixed number of iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from subtail.core import (
    RandomSource,
    ValidationError,
    assert_unit_rows,
    ceil_div,
    unit_normalize_rows,
)
from subtail.kernels import greedy_capacity_assign


@dataclass(frozen=True)
class ClusterConfig:
    """Sub-clustering knobs: capacity lower bound, update iterations, seeding."""

    delta: int = 10
    iterations: int = 10
    seed: RandomSource = field(default_factory=lambda: RandomSource(0, "cluster-seed"))

    def __post_init__(self) -> None:
        if self.delta < 1:
            raise ValidationError("delta must be >= 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")


@dataclass
class ClassClusters:
    """Sub-cluster partition of one class's samples."""

    label: int
    members: np.ndarray  # dataset-level sample indices
    assignment: np.ndarray  # local cluster index per member, in [0, cluster_count)
    centroids: np.ndarray  # (cluster_count, e) unit rows
    cluster_sizes: np.ndarray

    @property
    def cluster_count(self) -> int:
        return self.centroids.shape[0]


@dataclass
class SubclusterAssignment:
    """Per-class capacity-capped partitions plus a flat per-sample view.

    `cluster_ids[i]` is the class-local cluster index of sample i; a
    sub-cluster is globally identified by the (label, cluster_id) pair.
    """

    capacity: int
    per_class: dict[int, ClassClusters]
    cluster_ids: np.ndarray

    def cluster_counts(self, num_classes: int) -> np.ndarray:
        counts = np.zeros(num_classes, dtype=np.int64)
        for c, cc in self.per_class.items():
            counts[c] = cc.cluster_count
        return counts


def capacity_threshold(class_counts: np.ndarray, delta: int) -> int:
    """Cluster-size cap: the tail-class size, floored at delta."""
    counts = np.asarray(class_counts, dtype=np.int64)
    if counts.size == 0:
        raise ValidationError("class_counts must be non-empty")
    if counts.min() < 1:
        raise ValidationError("every class must have at least one sample")
    if delta < 1:
        raise ValidationError("delta must be >= 1")
    return int(max(int(counts.min()), delta))


def _farthest_point_seeds(features: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy spread seeding on the sphere: random first point, then
    repeatedly the sample least cosine-similar to its nearest chosen seed."""
    n = features.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    max_sim = features @ features[first]
    max_sim[first] = np.inf
    for _ in range(count - 1):
        nxt = int(np.argmin(max_sim))
        chosen.append(nxt)
        np.maximum(max_sim, features @ features[nxt], out=max_sim)
        max_sim[nxt] = np.inf
    return features[chosen].copy()


def _reseed_empty(features: np.ndarray, centroids: np.ndarray, empty: np.ndarray) -> None:
    # Defensive: with m = ceil(n / U) every cluster is forced non-empty,
    # but keep m fixed if the greedy order ever strands a center.
    occupied = np.delete(centroids, empty, axis=0)
    for j in empty:
        if occupied.size == 0:
            centroids[j] = features[0]
            continue
        max_sim = (features @ occupied.T).max(axis=1)
        centroids[j] = features[int(np.argmin(max_sim))]


def subcluster_class(
    features: np.ndarray,
    config: ClusterConfig,
    capacity: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Partition one class's unit embeddings into ceil(n / capacity) clusters.

    Returns (assignment, centroids): local cluster index per sample and
    unit-normalized mean centroids of the final partition.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValidationError("features must be a non-empty 2-D array")
    if capacity < 1:
        raise ValidationError("capacity must be >= 1")
    assert_unit_rows(features, what="class features")
    n = features.shape[0]
    m = ceil_div(n, capacity)

    rng = config.seed.generator()
    centers = _farthest_point_seeds(features, m, rng)

    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(config.iterations):
        sim = np.ascontiguousarray(features @ centers.T)
        if np.isnan(sim).any():
            raise ValidationError("NaN in similarity matrix")
        assignment = np.asarray(greedy_capacity_assign(sim, capacity), dtype=np.int64)

        sums = np.zeros((m, features.shape[1]))
        np.add.at(sums, assignment, features)
        sizes = np.bincount(assignment, minlength=m)
        empty = np.flatnonzero(sizes == 0)
        nonzero = sizes > 0
        means = sums.copy()
        means[nonzero] /= sizes[nonzero, None]
        if empty.size:
            _reseed_empty(features, means, empty)
        centers = unit_normalize_rows(means)

    return assignment, centers


def subcluster_all(
    embeddings: np.ndarray,
    labels: np.ndarray,
    config: ClusterConfig,
) -> SubclusterAssignment:
    """Apply the capacity threshold globally, then sub-cluster every class."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if embeddings.ndim != 2 or labels.shape != (embeddings.shape[0],):
        raise ValidationError("embeddings must be (N, e) with matching labels")
    assert_unit_rows(embeddings, what="embeddings")
    num_classes = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=num_classes)
    capacity = capacity_threshold(counts, config.delta)

    per_class: dict[int, ClassClusters] = {}
    cluster_ids = np.full(labels.shape[0], -1, dtype=np.int64)
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        assignment, centroids = subcluster_class(embeddings[members], _class_config(config, c), capacity)
        sizes = np.bincount(assignment, minlength=centroids.shape[0])
        per_class[c] = ClassClusters(
            label=c,
            members=members,
            assignment=assignment,
            centroids=centroids,
            cluster_sizes=sizes,
        )
        cluster_ids[members] = assignment
    return SubclusterAssignment(capacity=capacity, per_class=per_class, cluster_ids=cluster_ids)


def _class_config(config: ClusterConfig, label: int) -> ClusterConfig:
    return ClusterConfig(
        delta=config.delta,
        iterations=config.iterations,
        seed=config.seed.derive(f"class{label}"),
    )
