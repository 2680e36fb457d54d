"""Training orchestration: contrastive warm-up, periodic re-clustering and
weight recomputation, joint encoder/classifier optimization, evaluation,
and the ablation suite.

Epochs are 0-indexed. The first `warmup_epochs` train the encoder alone
with the plain supervised contrastive loss; from epoch `warmup_epochs`
onward, sub-clusters and classification weights are recomputed whenever
(epoch - warmup_epochs) is a multiple of `update_interval` (once, at the
first post-warm-up epoch, when `dynamic` is off), the encoder trains with
the sub-cluster loss, and the classifier trains with weighted
cross-entropy on detached embeddings.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from subtail.clustering import ClusterConfig, SubclusterAssignment, subcluster_all
from subtail.core import (
    Dataset,
    EmbeddingBatch,
    RandomSource,
    TrainingAbortError,
    ValidationError,
    ZeroSeparationError,
)
from subtail.losses import (
    ContrastiveConfig,
    augment_view,
    scl_loss,
    subcluster_loss,
    weighted_cross_entropy,
)
from subtail.metrics import (
    balanced_accuracy,
    balanced_f1,
    confusion_matrix,
    per_class_recall,
)
from subtail.model import (
    ClassifierParams,
    EncoderParams,
    OptimizerState,
    classifier_backward,
    classify,
    encode,
    encoder_backward,
    init_classifier,
    init_encoder,
    optimizer_step,
)
from subtail.reweighting import DistanceReport, distance_report

REWEIGHT_MODES = ("none", "class", "sub", "combined")


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    total_epochs: int = 100
    warmup_epochs: int = 5
    update_interval: int = 5
    batch_size: int = 128
    reweight_mode: str = "combined"
    dynamic: bool = True
    hidden_dim: int = 64
    embedding_dim: int = 32
    encoder_lr: float = 1e-3
    classifier_lr: float = 1e-3
    cluster_delta: int = 10
    cluster_iterations: int = 10
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    augment_sigma: float = 0.05
    augment_dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ValidationError("total_epochs must be >= 1")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ValidationError("warmup_epochs must satisfy 0 <= T0 < total_epochs")
        if self.update_interval < 1:
            raise ValidationError("update_interval must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.reweight_mode not in REWEIGHT_MODES:
            raise ValidationError(f"reweight_mode must be one of {REWEIGHT_MODES}")
        if self.hidden_dim < 1 or self.embedding_dim < 1:
            raise ValidationError("model dimensions must be >= 1")
        if self.encoder_lr <= 0 or self.classifier_lr <= 0:
            raise ValidationError("learning rates must be positive")


@dataclass
class EpochRecord:
    epoch: int
    contrastive_loss: float
    classification_loss: float | None
    weight_snapshot: np.ndarray | None
    cluster_counts: np.ndarray | None


@dataclass
class WeightEvent:
    """Successful sub-cluster/weight recomputation at one epoch."""

    epoch: int
    omega: np.ndarray
    report: DistanceReport | None


@dataclass
class TrainResult:
    encoder: EncoderParams
    classifier: ClassifierParams
    records: list[EpochRecord]
    weight_events: list[WeightEvent]
    final_assignment: SubclusterAssignment | None


@dataclass
class SplitMetrics:
    confusion: np.ndarray
    balanced_accuracy: float
    balanced_f1: float
    per_class_recall: np.ndarray

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "balanced_accuracy": self.balanced_accuracy,
            "balanced_f1": self.balanced_f1,
            "per_class_recall": self.per_class_recall.tolist(),
        }


def _weights_for_mode(
    embeddings: np.ndarray,
    labels: np.ndarray,
    assignment: SubclusterAssignment,
    mode: str,
    num_classes: int,
) -> tuple[np.ndarray, DistanceReport | None]:
    if mode == "none":
        return np.ones(num_classes), None
    report = distance_report(embeddings, labels, assignment)
    omega = {"class": report.w_class, "sub": report.w_sub, "combined": report.w_final}[mode]
    return omega.copy(), report


def train(
    dataset: Dataset,
    config: TrainConfig,
    indices: np.ndarray | None = None,
) -> TrainResult:
    """Run the full schedule on `dataset` (optionally restricted to `indices`)."""
    if indices is None:
        feats, labels = dataset.features, dataset.labels
    else:
        indices = np.asarray(indices, dtype=np.int64)
        feats, labels = dataset.features[indices], dataset.labels[indices]
    num_classes = dataset.num_classes
    if len(np.unique(labels)) != num_classes:
        raise ValidationError("training split must contain every class")
    n = feats.shape[0]

    root = RandomSource(config.seed)
    encoder = init_encoder(
        dataset.dim, config.hidden_dim, config.embedding_dim, root.derive("init").derive("encoder")
    )
    classifier = init_classifier(
        config.embedding_dim, num_classes, root.derive("init").derive("classifier")
    )
    opt_encoder = OptimizerState(config.encoder_lr)
    opt_classifier = OptimizerState(config.classifier_lr)
    cluster_config = ClusterConfig(
        delta=config.cluster_delta,
        iterations=config.cluster_iterations,
        seed=root.derive("cluster-seed"),
    )
    contrastive = config.contrastive

    assignment: SubclusterAssignment | None = None
    omega: np.ndarray | None = None
    weight_events: list[WeightEvent] = []
    records: list[EpochRecord] = []
    retry_pending = False

    for t in range(config.total_epochs):
        perm = root.derive("batch").derive(f"epoch{t}").generator().permutation(n)
        batches = [perm[s : s + config.batch_size] for s in range(0, n, config.batch_size)]

        if t < config.warmup_epochs:
            losses = []
            for bi, idx in enumerate(batches):
                batch, cache, cache_aug = _encode_batch(encoder, feats, labels, None, idx, config, root, t, bi)
                out = scl_loss(batch, contrastive)
                _apply_encoder_step(encoder, opt_encoder, cache, cache_aug, out)
                losses.append(out.value)
            records.append(EpochRecord(t, float(np.mean(losses)), None, None, None))
            continue

        due = (t - config.warmup_epochs) % config.update_interval == 0 if config.dynamic \
            else t == config.warmup_epochs
        if due or retry_pending:
            full_embeddings, _ = encode(encoder, feats)
            assignment = subcluster_all(full_embeddings, labels, cluster_config)
            try:
                omega, report = _weights_for_mode(
                    full_embeddings, labels, assignment, config.reweight_mode, num_classes
                )
                weight_events.append(WeightEvent(t, omega.copy(), report))
                retry_pending = False
            except ZeroSeparationError as exc:
                if retry_pending:
                    raise TrainingAbortError(
                        f"weight update failed twice consecutively: {exc}"
                    ) from exc
                retry_pending = True
                if omega is None:
                    omega = np.ones(num_classes)

        assert assignment is not None and omega is not None
        cluster_ids = assignment.cluster_ids
        con_losses, ce_losses = [], []
        for bi, idx in enumerate(batches):
            batch, cache, cache_aug = _encode_batch(
                encoder, feats, labels, cluster_ids, idx, config, root, t, bi
            )
            out = subcluster_loss(batch, contrastive)
            _apply_encoder_step(encoder, opt_encoder, cache, cache_aug, out)
            # classifier sees the pre-update anchor embeddings as constants
            logits = classify(classifier, batch.anchors)
            ce = weighted_cross_entropy(logits, labels[idx], omega)
            clf_grads, _ = classifier_backward(classifier, batch.anchors, ce.gradient)
            optimizer_step(opt_classifier, classifier.arrays(), clf_grads)
            con_losses.append(out.value)
            ce_losses.append(ce.value)
        records.append(
            EpochRecord(
                epoch=t,
                contrastive_loss=float(np.mean(con_losses)),
                classification_loss=float(np.mean(ce_losses)),
                weight_snapshot=omega.copy(),
                cluster_counts=assignment.cluster_counts(num_classes),
            )
        )

    return TrainResult(encoder, classifier, records, weight_events, assignment)


def _encode_batch(
    encoder: EncoderParams,
    feats: np.ndarray,
    labels: np.ndarray,
    cluster_ids: np.ndarray | None,
    idx: np.ndarray,
    config: TrainConfig,
    root: RandomSource,
    epoch: int,
    batch_index: int,
):
    x = feats[idx]
    rng = root.derive("augment").derive(f"epoch{epoch}").derive(f"batch{batch_index}")
    x_aug = augment_view(x, config.augment_sigma, config.augment_dropout, rng)
    z, cache = encode(encoder, x)
    z_aug, cache_aug = encode(encoder, x_aug)
    batch = EmbeddingBatch(
        anchors=z,
        augmented=z_aug,
        labels=labels[idx],
        cluster_ids=None if cluster_ids is None else cluster_ids[idx],
    )
    return batch, cache, cache_aug


def _apply_encoder_step(encoder, opt_state, cache, cache_aug, loss_output) -> None:
    grads = encoder_backward(encoder, cache, loss_output.gradient)
    grads_aug = encoder_backward(encoder, cache_aug, loss_output.gradient_aug)
    total = {k: grads[k] + grads_aug[k] for k in grads}
    optimizer_step(opt_state, encoder.arrays(), total)


def evaluate(
    encoder: EncoderParams,
    classifier: ClassifierParams,
    dataset: Dataset,
    indices: np.ndarray | None = None,
) -> SplitMetrics:
    """Confusion matrix and balanced metrics on the given split."""
    if indices is None:
        feats, labels = dataset.features, dataset.labels
    else:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0:
            raise ValidationError("cannot evaluate an empty split")
        feats, labels = dataset.features[indices], dataset.labels[indices]
    embeddings, _ = encode(encoder, feats)
    predictions = np.argmax(classify(classifier, embeddings), axis=1)
    cm = confusion_matrix(labels, predictions, dataset.num_classes)
    return SplitMetrics(
        confusion=cm,
        balanced_accuracy=balanced_accuracy(cm),
        balanced_f1=balanced_f1(cm),
        per_class_recall=per_class_recall(cm),
    )


def _schedule_variants(config: TrainConfig) -> list[tuple[str, str, TrainConfig]]:
    base_warmup = max(config.warmup_epochs, 1)
    rows = []
    for warmup_on in (False, True):
        for dynamic_on in (False, True):
            variant = replace(
                config,
                warmup_epochs=base_warmup if warmup_on else 0,
                dynamic=dynamic_on,
            )
            name = f"warmup={'on' if warmup_on else 'off'},dynamic={'on' if dynamic_on else 'off'}"
            rows.append(("schedule", name, variant))
    return rows


def _reweight_variants(config: TrainConfig) -> list[tuple[str, str, TrainConfig]]:
    return [
        ("reweight", mode, replace(config, reweight_mode=mode))
        for mode in REWEIGHT_MODES
    ]


def _run_variant(args) -> dict:
    dataset, variant_config, train_indices, eval_indices = args
    result = train(dataset, variant_config, train_indices)
    metrics = evaluate(result.encoder, result.classifier, dataset, eval_indices)
    return {
        "balanced_accuracy": metrics.balanced_accuracy,
        "balanced_f1": metrics.balanced_f1,
    }


def run_ablation_suite(
    dataset: Dataset,
    config: TrainConfig,
    train_indices: np.ndarray,
    eval_indices: np.ndarray,
) -> list[dict]:
    """Train the schedule and reweighting ablation variants under a shared
    seed and report (variant, BA, balanced F1) rows.

    Worker parallelism is capped by the SUBTAIL_THREADS environment
    variable (default 1 = sequential).
    """
    variants = _schedule_variants(config) + _reweight_variants(config)
    jobs: dict[tuple, list[int]] = {}
    ordered_keys = []
    for row_index, (_, _, variant) in enumerate(variants):
        key = (variant.warmup_epochs, variant.dynamic, variant.reweight_mode)
        jobs.setdefault(key, []).append(row_index)
        if len(jobs[key]) == 1:
            ordered_keys.append(key)

    unique_configs = {key: variants[rows[0]][2] for key, rows in jobs.items()}
    workers = int(os.environ.get("SUBTAIL_THREADS", "1"))
    job_args = [
        (dataset, unique_configs[key], train_indices, eval_indices) for key in ordered_keys
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_variant, job_args))
    else:
        outcomes = [_run_variant(a) for a in job_args]
    by_key = dict(zip(ordered_keys, outcomes))

    rows = []
    for table, name, variant in variants:
        key = (variant.warmup_epochs, variant.dynamic, variant.reweight_mode)
        outcome = by_key[key]
        rows.append({"table": table, "variant": name, **outcome})
    return rows
