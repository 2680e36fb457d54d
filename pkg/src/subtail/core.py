"""Core data types, vector math, and seeded randomness shared by all modules."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


class SubtailError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SubtailError):
    """Malformed input: bad shapes, labels, files, or configuration."""


class DegenerateVectorError(SubtailError):
    """A vector that should carry direction information has (near-)zero norm."""


class ZeroSeparationError(SubtailError):
    """Two representatives that must stay apart (nearly) coincide."""


class TrainingAbortError(SubtailError):
    """Training cannot continue after repeated numerical failure."""


def _stream_words(label: str) -> list[int]:
    # Stable across platforms and processes, unlike builtin hash().
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


@dataclass(frozen=True)
class RandomSource:
    """A named, reproducible stream of randomness.

    Equal (seed, stream) pairs yield generators producing identical draw
    sequences. Substreams forked with :meth:`derive` are statistically
    independent of each other and of the parent. A generator returned by
    :meth:`generator` is single-consumer: do not draw from one instance
    in two threads.
    """

    seed: int
    stream: str = "root"

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not self.stream:
            raise ValidationError("stream label must be non-empty")

    def derive(self, label: str) -> RandomSource:
        """Fork an independent, deterministically labelled substream."""
        return RandomSource(self.seed, f"{self.stream}/{label}")

    def generator(self) -> np.random.Generator:
        """Fresh generator; repeated calls restart the same sequence."""
        entropy = [self.seed, *_stream_words(self.stream)]
        return np.random.default_rng(np.random.SeedSequence(entropy))


_NORM_FLOOR = 1e-12


def unit_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to Euclidean norm 1, preserving direction.

    Raises:
        DegenerateVectorError: if the norm is (near-)zero, which signals
            numerical collapse upstream rather than a recoverable input.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot normalize a vector with non-finite components")
    norm = float(np.linalg.norm(v))
    if norm < _NORM_FLOOR:
        raise DegenerateVectorError("degenerate vector: norm below 1e-12")
    return v / norm


def unit_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise :func:`unit_normalize` for a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValidationError("cannot normalize rows with non-finite components")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms < _NORM_FLOOR):
        raise DegenerateVectorError("degenerate vector: row norm below 1e-12")
    return m / norms[:, None]


def assert_unit_rows(m: np.ndarray, tolerance: float = 1e-6, what: str = "rows") -> None:
    norms = np.linalg.norm(np.asarray(m, dtype=np.float64), axis=-1)
    err = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
    if err > tolerance:
        raise ValidationError(f"{what} must be unit-length within {tolerance:g} (max deviation {err:.3g})")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    assert_unit_rows(a[None, :], what="first argument")
    assert_unit_rows(b[None, :], what="second argument")
    return float(min(1.0, max(-1.0, float(a @ b))))


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


@dataclass
class Dataset:
    """Vector-feature classification dataset with contiguous integer labels.

    Attributes:
        features: (N, d) float64 matrix.
        labels: (N,) integers in [0, K).
        ids: length-N opaque sample identifiers.
        class_counts: (K,) samples per class; sums to N.
    """

    features: np.ndarray
    labels: np.ndarray
    ids: list[str]
    class_counts: np.ndarray = field(repr=False)

    @classmethod
    def create(cls, features: np.ndarray, labels: np.ndarray, ids: list[str] | None = None) -> Dataset:
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {features.shape}")
        n, d = features.shape
        if d < 1:
            raise ValidationError("feature dimension must be >= 1")
        if labels.shape != (n,):
            raise ValidationError(f"labels must have shape ({n},), got {labels.shape}")
        if not np.all(np.isfinite(features)):
            raise ValidationError("features must be finite")
        if n == 0:
            raise ValidationError("dataset must contain at least one sample")
        if labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        k = int(labels.max()) + 1
        counts = np.bincount(labels, minlength=k)
        if np.any(counts == 0):
            missing = int(np.flatnonzero(counts == 0)[0])
            raise ValidationError(f"non-contiguous labels: class {missing} has no samples")
        if k < 2:
            raise ValidationError("dataset must contain at least 2 classes")
        if ids is None:
            ids = [f"s{i:06d}" for i in range(n)]
        if len(ids) != n:
            raise ValidationError(f"ids must have length {n}, got {len(ids)}")
        return cls(features=features, labels=labels, ids=list(ids), class_counts=counts)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> Dataset:
        """Restricted dataset; raises if a class loses all its samples."""
        indices = np.asarray(indices, dtype=np.int64)
        sub_labels = self.labels[indices]
        if len(np.unique(sub_labels)) != self.num_classes:
            raise ValidationError("subset drops at least one class entirely")
        return Dataset.create(
            self.features[indices],
            sub_labels,
            [self.ids[i] for i in indices],
        )


@dataclass
class EmbeddingBatch:
    """Paired anchor/augmented unit embeddings with labels and optional cluster tags.

    `cluster_ids` are per-class-local cluster indices (-1 = unassigned); a
    sub-cluster is identified by the (label, cluster_id) pair. The
    `norm_tolerance` field exists so numerical probes that nudge rows
    slightly off the unit sphere can still build a batch; production
    callers keep the default.
    """

    anchors: np.ndarray
    augmented: np.ndarray
    labels: np.ndarray
    cluster_ids: np.ndarray | None = None
    norm_tolerance: float = 1e-6

    def __post_init__(self) -> None:
        self.anchors = np.ascontiguousarray(self.anchors, dtype=np.float64)
        self.augmented = np.ascontiguousarray(self.augmented, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.anchors.ndim != 2:
            raise ValidationError("anchors must be 2-D")
        if self.anchors.shape != self.augmented.shape:
            raise ValidationError(
                f"anchors and augmented shapes differ: {self.anchors.shape} vs {self.augmented.shape}"
            )
        b = self.anchors.shape[0]
        if self.labels.shape != (b,):
            raise ValidationError(f"labels must have shape ({b},)")
        assert_unit_rows(self.anchors, self.norm_tolerance, "anchor rows")
        assert_unit_rows(self.augmented, self.norm_tolerance, "augmented rows")
        if self.cluster_ids is not None:
            self.cluster_ids = np.asarray(self.cluster_ids, dtype=np.int64)
            if self.cluster_ids.shape != (b,):
                raise ValidationError(f"cluster_ids must have shape ({b},)")

    @property
    def size(self) -> int:
        return self.anchors.shape[0]


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Numerically stable row-wise softmax; -inf entries get probability 0."""
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    with np.errstate(under="ignore"):
        e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def log_sum_exp_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp, stable under -inf masking."""
    m = np.max(logits, axis=1)
    with np.errstate(under="ignore"):
        s = np.sum(np.exp(logits - m[:, None]), axis=1)
    return m + np.log(s)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def is_finite_scalar(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
