"""Contrastive and classification losses with analytic gradients.

All losses treat their direct inputs (unit embeddings or logits) as free
variables; the chain rule through the encoder's unit normalization lives
in the model module. Per-anchor sets follow the literal definitions: the
view set of anchor i is the other anchors in the batch plus i's own
augmented embedding (other augmentations are not included).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from subtail.core import (
    EmbeddingBatch,
    RandomSource,
    ValidationError,
    log_sum_exp_rows,
)


@dataclass(frozen=True)
class ContrastiveConfig:
    """Temperatures for the class / sub-cluster terms and their balance."""

    tau: float = 0.1
    tau1: float = 0.1
    tau2: float = 0.1
    beta: float = 1.0

    def __post_init__(self) -> None:
        if min(self.tau, self.tau1, self.tau2) <= 0:
            raise ValidationError("temperatures must be positive")
        if self.beta < 0:
            raise ValidationError("beta must be non-negative")


@dataclass
class LossOutput:
    """Loss value plus gradient(s) w.r.t. the differentiated input.

    `gradient` matches the primary input (anchors for contrastive losses,
    logits for cross-entropy); `gradient_aug` is present for losses that
    also differentiate w.r.t. the augmented view.
    """

    value: float
    gradient: np.ndarray
    gradient_aug: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise ValidationError("loss value is not finite")
        if not np.all(np.isfinite(self.gradient)):
            raise ValidationError("loss gradient is not finite")
        if self.gradient_aug is not None and not np.all(np.isfinite(self.gradient_aug)):
            raise ValidationError("augmented-view gradient is not finite")


def augment_view(
    features: np.ndarray,
    sigma: float,
    dropout_p: float,
    rng: RandomSource,
) -> np.ndarray:
    """Second view of a feature batch: Gaussian jitter then coordinate dropout.

    Deterministic given `rng`; each coordinate of the jittered batch is
    independently zeroed with probability `dropout_p`.
    """
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    if not 0 <= dropout_p < 1:
        raise ValidationError("dropout_p must lie in [0, 1)")
    features = np.asarray(features, dtype=np.float64)
    gen = rng.generator()
    noise = gen.standard_normal(features.shape)
    keep = gen.random(features.shape) >= dropout_p
    return (features + sigma * noise) * keep


def _similarities(batch: EmbeddingBatch) -> np.ndarray:
    """(B, B+1) similarities: anchor-to-anchor block plus an extra column
    holding each anchor's similarity to its own augmentation."""
    z = batch.anchors
    own = np.einsum("ij,ij->i", z, batch.augmented)
    sim = np.concatenate([z @ z.T, own[:, None]], axis=1)
    if np.isnan(sim).any():
        raise ValidationError("NaN in similarities")
    return sim


def _masked_mean_log_softmax(
    sim: np.ndarray,
    denom_mask: np.ndarray,
    pos_mask: np.ndarray,
    tau: float,
) -> tuple[float, np.ndarray]:
    """One contrastive term: sum over anchors of the mean, over positives,
    of -log softmax(sim / tau) restricted to the denominator set.

    Returns the value and its gradient w.r.t. `sim`. Anchors with no
    positives contribute nothing (0/0 is defined as 0).
    """
    logits = np.where(denom_mask, sim / tau, -np.inf)
    lse = log_sum_exp_rows(logits)
    with np.errstate(under="ignore"):
        q = np.exp(logits - lse[:, None])
    pos_counts = pos_mask.sum(axis=1)
    active = pos_counts > 0

    log_q = logits - lse[:, None]
    per_anchor = -(np.where(pos_mask, log_q, 0.0).sum(axis=1))
    value = float(np.sum(per_anchor[active] / pos_counts[active]))

    grad = np.zeros_like(sim)
    inv_counts = np.zeros(sim.shape[0])
    inv_counts[active] = 1.0 / pos_counts[active]
    grad[active] = (q[active] - pos_mask[active] * inv_counts[active, None]) / tau
    return value, grad


def _anchor_masks(batch: EmbeddingBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(view, same_class, own_aug) masks over the (B, B+1) similarity layout."""
    b = batch.size
    off_diag = ~np.eye(b, dtype=bool)
    view = np.ones((b, b + 1), dtype=bool)
    view[:, :b] = off_diag
    same_class = np.zeros((b, b + 1), dtype=bool)
    same_class[:, :b] = (batch.labels[:, None] == batch.labels[None, :]) & off_diag
    own_aug = np.zeros((b, b + 1), dtype=bool)
    own_aug[:, b] = True
    return view, same_class, own_aug


def _assemble_gradients(batch: EmbeddingBatch, grad_sim: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map a gradient over the (B, B+1) similarity layout back to embeddings."""
    z = batch.anchors
    g_cross = grad_sim[:, :-1]
    g_own = grad_sim[:, -1]
    grad_anchors = g_cross @ z + g_cross.T @ z + g_own[:, None] * batch.augmented
    grad_aug = g_own[:, None] * z
    return grad_anchors, grad_aug


def scl_loss(batch: EmbeddingBatch, config: ContrastiveConfig) -> LossOutput:
    """Supervised contrastive loss over anchors and their augmentations.

    For each anchor the positives are the same-class anchors plus its own
    augmentation; the denominator runs over all other anchors plus the own
    augmentation, at temperature `tau`.
    """
    sim = _similarities(batch)
    view, same_class, own_aug = _anchor_masks(batch)
    value, grad_sim = _masked_mean_log_softmax(sim, view, same_class | own_aug, config.tau)
    grad_anchors, grad_aug = _assemble_gradients(batch, grad_sim)
    return LossOutput(value=value, gradient=grad_anchors, gradient_aug=grad_aug)


def subcluster_loss(batch: EmbeddingBatch, config: ContrastiveConfig) -> LossOutput:
    """Two-granularity contrastive loss using class labels and cluster tags.

    Term one pulls each anchor toward its own sub-cluster (same class and
    cluster tag, plus the own augmentation) against the full view set at
    temperature `tau1`. Term two, weighted by `beta`, pulls it toward
    remaining same-class positives at temperature `tau2`, with the anchor's
    sub-cluster removed from the denominator. Anchors whose second positive
    set is empty contribute only term one.
    """
    if batch.cluster_ids is None:
        raise ValidationError("subcluster_loss requires cluster_ids")
    if np.any(batch.cluster_ids < 0):
        raise ValidationError("all rows must carry a cluster tag")

    sim = _similarities(batch)
    view, same_class, own_aug = _anchor_masks(batch)
    b = batch.size
    same_cluster = np.zeros((b, b + 1), dtype=bool)
    same_cluster[:, :b] = batch.cluster_ids[:, None] == batch.cluster_ids[None, :]
    in_subcluster = same_class & same_cluster

    v1, g1 = _masked_mean_log_softmax(sim, view, in_subcluster | own_aug, config.tau1)
    v2, g2 = _masked_mean_log_softmax(
        sim,
        view & ~in_subcluster,
        (same_class & ~in_subcluster) | own_aug,
        config.tau2,
    )
    value = v1 + config.beta * v2
    grad_anchors, grad_aug = _assemble_gradients(batch, g1 + config.beta * g2)
    return LossOutput(value=value, gradient=grad_anchors, gradient_aug=grad_aug)


def weighted_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray,
) -> LossOutput:
    """Mean softmax cross-entropy with per-class weights on the true labels."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if logits.ndim != 2:
        raise ValidationError("logits must be 2-D")
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValidationError(f"labels must have shape ({b},)")
    if class_weights.shape != (k,):
        raise ValidationError(f"class_weights must have shape ({k},)")
    if np.any(class_weights <= 0) or not np.all(np.isfinite(class_weights)):
        raise ValidationError("class weights must be positive and finite")
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationError("label out of range")

    log_probs = logits - log_sum_exp_rows(logits)[:, None]
    sample_weights = class_weights[labels]
    value = float(np.mean(-sample_weights * log_probs[np.arange(b), labels]))

    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    grad *= sample_weights[:, None] / b
    return LossOutput(value=value, gradient=grad)
