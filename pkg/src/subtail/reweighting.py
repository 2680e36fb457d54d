"""Class centroids, inter-class and sub-cluster distances, and the
combined classification weights.

Both granularities measure plain Euclidean distance between plain-mean
centroids (no re-normalization to the sphere), so class-level and
sub-cluster-level distances live in the same metric space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from subtail.clustering import SubclusterAssignment
from subtail.core import ValidationError, ZeroSeparationError

_DISTANCE_FLOOR = 1e-8


@dataclass
class DistanceReport:
    """Distance geometry and the derived classification weights.

    `w_class` and `w_sub` each sum to 1; `w_final` is their elementwise
    sum (sums to 2) and is consumed verbatim by the weighted
    cross-entropy.
    """

    class_centroids: np.ndarray  # (K, e)
    pairwise: np.ndarray  # (K, K) symmetric, zero diagonal
    class_min: np.ndarray  # (K,)
    sub_min: np.ndarray  # (K,)
    w_class: np.ndarray  # (K,)
    w_sub: np.ndarray  # (K,)
    w_final: np.ndarray  # (K,)

    def to_dict(self) -> dict:
        return {
            "class_centroids": self.class_centroids.tolist(),
            "pairwise": self.pairwise.tolist(),
            "class_min": self.class_min.tolist(),
            "sub_min": self.sub_min.tolist(),
            "w_class": self.w_class.tolist(),
            "w_sub": self.w_sub.tolist(),
            "w_final": self.w_final.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DistanceReport:
        return cls(**{key: np.asarray(d[key], dtype=np.float64) for key in d})


def class_centroids(embeddings: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Arithmetic mean embedding per class (not re-normalized)."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if embeddings.ndim != 2 or labels.shape != (embeddings.shape[0],):
        raise ValidationError("embeddings must be (N, e) with matching labels")
    num_classes = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ValidationError(f"class {empty} has no samples")
    sums = np.zeros((num_classes, embeddings.shape[1]))
    np.add.at(sums, labels, embeddings)
    return sums / counts[:, None]


def min_class_distances(centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise Euclidean distances between class centroids and, per class,
    the distance to its nearest neighboring class."""
    centroids = np.asarray(centroids, dtype=np.float64)
    k = centroids.shape[0]
    if k < 2:
        raise ValidationError("need at least 2 classes")
    diff = centroids[:, None, :] - centroids[None, :, :]
    pairwise = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(pairwise, 0.0)
    off_diag = pairwise + np.diag(np.full(k, np.inf))
    class_min = off_diag.min(axis=1)
    if np.any(class_min < _DISTANCE_FLOOR):
        raise ZeroSeparationError("zero class separation: two class centroids coincide")
    return pairwise, class_min


def class_weights(class_min: np.ndarray) -> np.ndarray:
    """Reciprocal of each class's nearest-neighbor distance, normalized to sum 1."""
    class_min = np.asarray(class_min, dtype=np.float64)
    if np.any(class_min <= 0):
        raise ValidationError("minimum distances must be positive")
    w = 1.0 / class_min
    return w / w.sum()


def subcluster_mean_centroids(
    assignment: SubclusterAssignment,
    embeddings: np.ndarray,
) -> dict[int, np.ndarray]:
    """Plain-mean centroid of every sub-cluster, grouped by class."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    out: dict[int, np.ndarray] = {}
    for c, cc in sorted(assignment.per_class.items()):
        sums = np.zeros((cc.cluster_count, embeddings.shape[1]))
        np.add.at(sums, cc.assignment, embeddings[cc.members])
        out[c] = sums / cc.cluster_sizes[:, None]
    return out


def min_cross_group_distances(groups: dict[int, np.ndarray]) -> np.ndarray:
    """Per group, the minimum Euclidean distance from any of its points to
    any point of a different group."""
    if len(groups) < 2:
        raise ValidationError("need at least 2 classes")
    keys = sorted(groups)
    stacked = np.concatenate([np.asarray(groups[k], dtype=np.float64) for k in keys])
    tags = np.concatenate([np.full(len(groups[k]), k) for k in keys])
    diff = stacked[:, None, :] - stacked[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    result = np.empty(len(keys))
    for i, k in enumerate(keys):
        rows = tags == k
        result[i] = dist[np.ix_(rows, ~rows)].min()
    if np.any(result < _DISTANCE_FLOOR):
        raise ZeroSeparationError(
            "zero sub-cluster separation: cross-class sub-centroids coincide"
        )
    return result


def subcluster_weights(
    assignment: SubclusterAssignment,
    embeddings: np.ndarray,
    labels: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest cross-class sub-cluster distance per class and the
    normalized reciprocal weights."""
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = int(labels.max()) + 1
    if set(assignment.per_class) != set(range(num_classes)):
        raise ValidationError("assignment classes do not match labels")
    centroids = subcluster_mean_centroids(assignment, embeddings)
    sub_min = min_cross_group_distances(centroids)
    w = 1.0 / sub_min
    return sub_min, w / w.sum()


def combined_weights(w_class: np.ndarray, w_sub: np.ndarray) -> np.ndarray:
    """Elementwise sum of the two normalized weight vectors (sums to 2)."""
    w_class = np.asarray(w_class, dtype=np.float64)
    w_sub = np.asarray(w_sub, dtype=np.float64)
    if w_class.shape != w_sub.shape:
        raise ValidationError("weight vectors must have equal length")
    for name, w in (("w_class", w_class), ("w_sub", w_sub)):
        if abs(float(w.sum()) - 1.0) > 1e-6:
            raise ValidationError(f"{name} must sum to 1")
    return w_class + w_sub


def distance_report(
    embeddings: np.ndarray,
    labels: np.ndarray,
    assignment: SubclusterAssignment,
) -> DistanceReport:
    """Full distance/weight snapshot for the current embedding geometry."""
    centroids = class_centroids(embeddings, labels)
    pairwise, class_min = min_class_distances(centroids)
    w_class = class_weights(class_min)
    sub_min, w_sub = subcluster_weights(assignment, embeddings, labels)
    return DistanceReport(
        class_centroids=centroids,
        pairwise=pairwise,
        class_min=class_min,
        sub_min=sub_min,
        w_class=w_class,
        w_sub=w_sub,
        w_final=combined_weights(w_class, w_sub),
    )
