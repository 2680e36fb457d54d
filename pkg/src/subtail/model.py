"""Feed-forward encoder with unit-normalized output, linear classifier,
manual backpropagation, and an adaptive-moment optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from subtail.core import (
    DegenerateVectorError,
    RandomSource,
    SubtailError,
    ValidationError,
)

_EMBED_NORM_FLOOR = 1e-12


@dataclass
class EncoderParams:
    """One-hidden-layer rectifier network; output rows are unit-normalized."""

    W1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (e, h)
    b2: np.ndarray  # (e,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> EncoderParams:
        return EncoderParams(**{k: v.copy() for k, v in self.arrays().items()})


@dataclass
class ClassifierParams:
    W: np.ndarray  # (K, e)
    b: np.ndarray  # (K,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> ClassifierParams:
        return ClassifierParams(**{k: v.copy() for k, v in self.arrays().items()})


@dataclass
class EncodeCache:
    """Forward-pass intermediates retained for the backward pass."""

    inputs: np.ndarray
    pre_activation: np.ndarray
    hidden: np.ndarray
    raw_output: np.ndarray
    norms: np.ndarray
    embeddings: np.ndarray


def _glorot_uniform(gen: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-limit, limit, size=(fan_out, fan_in))


def init_encoder(dim: int, hidden: int, embed: int, source: RandomSource) -> EncoderParams:
    gen = source.generator()
    return EncoderParams(
        W1=_glorot_uniform(gen, hidden, dim),
        b1=np.zeros(hidden),
        W2=_glorot_uniform(gen, embed, hidden),
        b2=np.zeros(embed),
    )


def init_classifier(embed: int, num_classes: int, source: RandomSource) -> ClassifierParams:
    gen = source.generator()
    return ClassifierParams(
        W=_glorot_uniform(gen, num_classes, embed),
        b=np.zeros(num_classes),
    )


def encode(params: EncoderParams, features: np.ndarray) -> tuple[np.ndarray, EncodeCache]:
    """Map features to unit-length embeddings; returns (embeddings, cache)."""
    x = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValidationError("encoder inputs must be finite")
    pre = x @ params.W1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    raw = hidden @ params.W2.T + params.b2
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms < _EMBED_NORM_FLOOR):
        raise DegenerateVectorError("degenerate embedding: pre-normalization norm ~ 0")
    z = raw / norms[:, None]
    return z, EncodeCache(x, pre, hidden, raw, norms, z)


def encoder_backward(
    params: EncoderParams,
    cache: EncodeCache,
    grad_embeddings: np.ndarray,
) -> dict[str, np.ndarray]:
    """Exact gradients through normalization, affine, and rectifier layers."""
    dz = np.asarray(grad_embeddings, dtype=np.float64)
    if dz.shape != cache.embeddings.shape:
        raise ValidationError(
            f"gradient shape {dz.shape} does not match embeddings {cache.embeddings.shape}"
        )
    z = cache.embeddings
    # d(v/|v|) = (I - z z^T) / |v|
    draw = (dz - z * np.sum(dz * z, axis=1, keepdims=True)) / cache.norms[:, None]
    grad_W2 = draw.T @ cache.hidden
    grad_b2 = draw.sum(axis=0)
    dhidden = draw @ params.W2
    dpre = dhidden * (cache.pre_activation > 0)
    grad_W1 = dpre.T @ cache.inputs
    grad_b1 = dpre.sum(axis=0)
    return {"W1": grad_W1, "b1": grad_b1, "W2": grad_W2, "b2": grad_b2}


def classify(params: ClassifierParams, embeddings: np.ndarray) -> np.ndarray:
    z = np.asarray(embeddings, dtype=np.float64)
    return z @ params.W.T + params.b


def classifier_backward(
    params: ClassifierParams,
    embeddings: np.ndarray,
    grad_logits: np.ndarray,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Returns (parameter gradients, gradient w.r.t. embeddings)."""
    z = np.asarray(embeddings, dtype=np.float64)
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.shape != (z.shape[0], params.W.shape[0]):
        raise ValidationError("grad_logits shape mismatch")
    grads = {"W": g.T @ z, "b": g.sum(axis=0)}
    grad_embeddings = g @ params.W
    return grads, grad_embeddings


@dataclass
class OptimizerState:
    """Adaptive-moment (Adam) state with bias correction."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")


def optimizer_step(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """In-place bias-corrected adaptive-moment update; returns `params`."""
    if set(params) != set(grads):
        raise ValidationError("parameter/gradient name mismatch")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise SubtailError(f"diverged: non-finite gradient for {name}")

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params
