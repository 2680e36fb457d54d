"""Synthetic long-tailed dataset generation, feature-file ingestion, split
construction, and persistence of configs, checkpoints, and run reports.

File formats:
  * Feature CSV: header ``id,label,f0,...,f{d-1}``, one sample per row.
  * Config: YAML with nested sections, echoed verbatim into reports.
  * Report: JSON object with top-level keys ``config``, ``epochs``,
    ``metrics``, ``weights``; wall-clock goes to a ``timing.txt`` sidecar
    so repeated runs produce byte-identical reports.
  * Checkpoint: magic ``SUBT``, u32 version, u32 dims (d, h, e, K), then
    row-major little-endian float64 arrays.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from subtail.clustering import SubclusterAssignment
from subtail.core import Dataset, RandomSource, ValidationError
from subtail.losses import ContrastiveConfig
from subtail.model import ClassifierParams, EncoderParams
from subtail.trainer import EpochRecord, TrainConfig, WeightEvent

CHECKPOINT_MAGIC = b"SUBT"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Synthetic data

@dataclass(frozen=True)
class SyntheticSpec:
    """Long-tailed Gaussian-mixture generator settings.

    Class sizes follow a geometric profile from `n_max` down to roughly
    `n_max / imbalance_ratio`; each class is a mixture of `modes`
    Gaussian components whose centers are scaled by `overlap` (smaller
    means more confusable classes).
    """

    classes: int
    dim: int
    n_max: int
    imbalance_ratio: float
    sigma_within: float = 1.0
    modes: int = 1
    overlap: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.n_max < 1:
            raise ValidationError("n_max must be >= 1")
        if self.imbalance_ratio < 1:
            raise ValidationError("imbalance ratio must be >= 1")
        if self.sigma_within < 0:
            raise ValidationError("sigma_within must be non-negative")
        if self.modes < 1:
            raise ValidationError("modes must be >= 1")
        if self.overlap <= 0:
            raise ValidationError("overlap must be positive")


def synthetic_class_sizes(spec: SyntheticSpec) -> np.ndarray:
    """Geometric size profile, round-half-up: n_c = round(n_max * R^(-c/(K-1)))."""
    exponents = -np.arange(spec.classes) / (spec.classes - 1)
    sizes = np.floor(spec.n_max * spec.imbalance_ratio**exponents + 0.5).astype(np.int64)
    if sizes.min() < 2:
        raise ValidationError("ratio too extreme for n_max: smallest class would have < 2 samples")
    return sizes


_CENTER_RANK = 5


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    sizes = synthetic_class_sizes(spec)
    source = RandomSource(spec.seed, "synthetic")
    # Mode centers live in a low-rank subspace: with isotropic placement in
    # high dimension, pairwise center distances concentrate and every class
    # is equally hard; a rank cap keeps class separability genuinely varied.
    rank = min(spec.dim, _CENTER_RANK)
    center_gen = source.derive("centers").generator()
    latent = center_gen.standard_normal((spec.classes, spec.modes, rank))
    basis = center_gen.standard_normal((rank, spec.dim)) / np.sqrt(rank)
    centers = spec.overlap * (latent @ basis)
    mode_gen = source.derive("modes").generator()
    noise_gen = source.derive("noise").generator()

    blocks, labels = [], []
    for c, size in enumerate(sizes):
        chosen = mode_gen.integers(spec.modes, size=size)
        noise = spec.sigma_within * noise_gen.standard_normal((size, spec.dim))
        blocks.append(centers[c, chosen] + noise)
        labels.append(np.full(size, c, dtype=np.int64))
    features = np.concatenate(blocks)
    labels = np.concatenate(labels)
    ids = [f"syn{i:06d}" for i in range(features.shape[0])]
    return Dataset.create(features, labels, ids)


# ---------------------------------------------------------------------------
# Feature CSV

def save_features(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    d = dataset.dim
    header = "id,label," + ",".join(f"f{j}" for j in range(d))
    lines = [header]
    for i in range(dataset.num_samples):
        feats = ",".join(repr(float(v)) for v in dataset.features[i])
        lines.append(f"{dataset.ids[i]},{int(dataset.labels[i])},{feats}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path: str | Path) -> Dataset:
    """Parse a feature CSV; errors name the offending line."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"feature file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise ValidationError(f"{path}: empty feature file")
    header = lines[0].split(",")
    if header[:2] != ["id", "label"] or len(header) < 3:
        raise ValidationError(f"{path}: line 1: header must be id,label,f0,...")
    d = len(header) - 2
    expected = ["id", "label"] + [f"f{j}" for j in range(d)]
    if header != expected:
        raise ValidationError(f"{path}: line 1: malformed feature columns")

    ids: list[str] = []
    labels: list[int] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != d + 2:
            raise ValidationError(
                f"{path}: line {lineno}: expected {d + 2} fields, got {len(parts)}"
            )
        ids.append(parts[0])
        try:
            labels.append(int(parts[1]))
        except ValueError as exc:
            raise ValidationError(f"{path}: line {lineno}: non-integer label {parts[1]!r}") from exc
        try:
            values = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise ValidationError(f"{path}: line {lineno}: non-numeric feature") from exc
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"{path}: line {lineno}: non-finite feature")
        rows.append(values)
    if not rows:
        raise ValidationError(f"{path}: no data rows")

    label_arr = np.asarray(labels, dtype=np.int64)
    if label_arr.min() < 0:
        raise ValidationError(f"{path}: negative label")
    present = np.unique(label_arr)
    expected_labels = np.arange(label_arr.max() + 1)
    if len(present) != len(expected_labels):
        missing = sorted(set(expected_labels.tolist()) - set(present.tolist()))
        raise ValidationError(f"{path}: non-contiguous labels: missing {missing}")
    return Dataset.create(np.asarray(rows, dtype=np.float64), label_arr, ids)


# ---------------------------------------------------------------------------
# Splits

@dataclass(frozen=True)
class SplitSpec:
    mode: str  # "random" | "standard"
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("random", "standard"):
            raise ValidationError("split mode must be 'random' or 'standard'")
        f = self.fractions
        if len(f) != 3 or any(x <= 0 for x in f):
            raise ValidationError("fractions must be three positive numbers")
        if abs(sum(f) - 1.0) > 1e-9:
            raise ValidationError("fractions must sum to 1")


@dataclass
class Split:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray


def make_split(dataset: Dataset, spec: SplitSpec) -> Split:
    """Disjoint, exhaustive, seeded train/valid/test index sets.

    Random mode shuffles freely by fractions; standard mode gives every
    class exactly floor(fraction * n_min) validation and test samples.
    """
    rng = RandomSource(spec.seed, "split").generator()
    n = dataset.num_samples
    _, f_valid, f_test = spec.fractions

    if spec.mode == "random":
        perm = rng.permutation(n)
        n_valid = int(f_valid * n)
        n_test = int(f_test * n)
        n_train = n - n_valid - n_test
        return Split(
            train=np.sort(perm[:n_train]),
            valid=np.sort(perm[n_train : n_train + n_valid]),
            test=np.sort(perm[n_train + n_valid :]),
        )

    n_min = int(dataset.class_counts.min())
    per_valid = int(f_valid * n_min)
    per_test = int(f_test * n_min)
    if per_valid == 0 or per_test == 0:
        raise ValidationError(
            "standard split needs floor(fraction * n_min) >= 1 for valid and test"
        )
    train_parts, valid_parts, test_parts = [], [], []
    for c in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == c)
        order = rng.permutation(len(members))
        shuffled = members[order]
        test_parts.append(shuffled[:per_test])
        valid_parts.append(shuffled[per_test : per_test + per_valid])
        train_parts.append(shuffled[per_test + per_valid :])
    return Split(
        train=np.sort(np.concatenate(train_parts)),
        valid=np.sort(np.concatenate(valid_parts)),
        test=np.sort(np.concatenate(test_parts)),
    )


# ---------------------------------------------------------------------------
# Config files

def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ValidationError(f"config: missing key '{key}' in {where}")
    return mapping[key]


def _check_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ValidationError(f"config: unknown keys {sorted(unknown)} in {where}")


def _load_yaml(path: str | Path) -> tuple[dict, str]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a mapping")
    return data, text


def load_synthetic_spec(path: str | Path) -> tuple[SyntheticSpec, str]:
    data, text = _load_yaml(path)
    allowed = {
        "classes", "dim", "n_max", "imbalance_ratio",
        "sigma_within", "modes", "overlap", "seed",
    }
    _check_keys(data, allowed, "synthetic spec")
    try:
        spec = SyntheticSpec(
            classes=int(_require(data, "classes", "synthetic spec")),
            dim=int(_require(data, "dim", "synthetic spec")),
            n_max=int(_require(data, "n_max", "synthetic spec")),
            imbalance_ratio=float(_require(data, "imbalance_ratio", "synthetic spec")),
            sigma_within=float(data.get("sigma_within", 1.0)),
            modes=int(data.get("modes", 1)),
            overlap=float(data.get("overlap", 1.0)),
            seed=int(data.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"synthetic spec: {exc}") from exc
    return spec, text


@dataclass
class RunConfig:
    """Parsed training config file: trainer settings plus split settings."""

    train: TrainConfig
    split: SplitSpec
    text: str


def parse_run_config(data: dict, text: str) -> RunConfig:
    top_allowed = {
        "seed", "epochs", "batch_size", "reweight_mode", "dynamic",
        "model", "optimizer", "cluster", "contrastive", "augment", "split",
    }
    _check_keys(data, top_allowed, "config")

    epochs = _require(data, "epochs", "config")
    _check_keys(epochs, {"total", "warmup", "update_interval"}, "epochs")
    model = data.get("model", {})
    _check_keys(model, {"hidden_dim", "embedding_dim"}, "model")
    optimizer = data.get("optimizer", {})
    _check_keys(optimizer, {"encoder_lr", "classifier_lr"}, "optimizer")
    cluster = data.get("cluster", {})
    _check_keys(cluster, {"delta", "iterations"}, "cluster")
    contrastive = data.get("contrastive", {})
    _check_keys(contrastive, {"tau", "tau1", "tau2", "beta"}, "contrastive")
    augment = data.get("augment", {})
    _check_keys(augment, {"sigma", "dropout_p"}, "augment")
    split = _require(data, "split", "config")
    _check_keys(split, {"mode", "fractions", "seed"}, "split")

    try:
        train_config = TrainConfig(
            seed=int(_require(data, "seed", "config")),
            total_epochs=int(_require(epochs, "total", "epochs")),
            warmup_epochs=int(epochs.get("warmup", 5)),
            update_interval=int(epochs.get("update_interval", 5)),
            batch_size=int(data.get("batch_size", 128)),
            reweight_mode=str(data.get("reweight_mode", "combined")),
            dynamic=bool(data.get("dynamic", True)),
            hidden_dim=int(model.get("hidden_dim", 64)),
            embedding_dim=int(model.get("embedding_dim", 32)),
            encoder_lr=float(optimizer.get("encoder_lr", 1e-3)),
            classifier_lr=float(optimizer.get("classifier_lr", 1e-3)),
            cluster_delta=int(cluster.get("delta", 10)),
            cluster_iterations=int(cluster.get("iterations", 10)),
            contrastive=ContrastiveConfig(
                tau=float(contrastive.get("tau", 0.1)),
                tau1=float(contrastive.get("tau1", 0.1)),
                tau2=float(contrastive.get("tau2", 0.1)),
                beta=float(contrastive.get("beta", 1.0)),
            ),
            augment_sigma=float(augment.get("sigma", 0.05)),
            augment_dropout=float(augment.get("dropout_p", 0.1)),
        )
        split_spec = SplitSpec(
            mode=str(_require(split, "mode", "split")),
            fractions=tuple(float(x) for x in split.get("fractions", (0.8, 0.1, 0.1))),
            seed=int(split.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"config: {exc}") from exc
    return RunConfig(train=train_config, split=split_spec, text=text)


def load_run_config(path: str | Path) -> RunConfig:
    data, text = _load_yaml(path)
    return parse_run_config(data, text)


def parse_run_config_text(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"invalid YAML config: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config must be a mapping")
    return parse_run_config(data, text)


# ---------------------------------------------------------------------------
# Run reports

@dataclass
class RunReport:
    config_text: str
    data_path: str
    epochs: list[EpochRecord]
    metrics: dict[str, dict]
    weights: list[dict]
    wall_clock_seconds: float | None = None


def weight_event_to_dict(event: WeightEvent) -> dict:
    return {
        "epoch": event.epoch,
        "omega": event.omega.tolist(),
        "report": None if event.report is None else event.report.to_dict(),
    }


def _epoch_to_dict(rec: EpochRecord) -> dict:
    return {
        "epoch": rec.epoch,
        "contrastive_loss": rec.contrastive_loss,
        "classification_loss": rec.classification_loss,
        "weight_snapshot": None if rec.weight_snapshot is None else rec.weight_snapshot.tolist(),
        "cluster_counts": None if rec.cluster_counts is None else rec.cluster_counts.tolist(),
    }


def _epoch_from_dict(d: dict) -> EpochRecord:
    return EpochRecord(
        epoch=int(d["epoch"]),
        contrastive_loss=float(d["contrastive_loss"]),
        classification_loss=None if d["classification_loss"] is None else float(d["classification_loss"]),
        weight_snapshot=None if d["weight_snapshot"] is None else np.asarray(d["weight_snapshot"]),
        cluster_counts=None if d["cluster_counts"] is None else np.asarray(d["cluster_counts"]),
    )


def report_to_object(report: RunReport) -> dict:
    return {
        "config": {"text": report.config_text, "data": report.data_path},
        "epochs": [_epoch_to_dict(r) for r in report.epochs],
        "metrics": report.metrics,
        "weights": report.weights,
    }


def save_report(report: RunReport, run_dir: str | Path) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "report.json"
    path.write_text(json.dumps(report_to_object(report), indent=2) + "\n", encoding="utf-8")
    if report.wall_clock_seconds is not None:
        (run_dir / "timing.txt").write_text(f"{report.wall_clock_seconds!r}\n", encoding="utf-8")
    return path


def load_report(run_dir: str | Path) -> RunReport:
    run_dir = Path(run_dir)
    path = run_dir / "report.json"
    if not path.exists():
        raise ValidationError(f"no report.json in {run_dir}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("config", "epochs", "metrics", "weights"):
        if key not in obj:
            raise ValidationError(f"{path}: missing top-level key '{key}'")
    timing = run_dir / "timing.txt"
    wall = float(timing.read_text().strip()) if timing.exists() else None
    return RunReport(
        config_text=obj["config"]["text"],
        data_path=obj["config"]["data"],
        epochs=[_epoch_from_dict(d) for d in obj["epochs"]],
        metrics=obj["metrics"],
        weights=obj["weights"],
        wall_clock_seconds=wall,
    )


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path: str | Path, encoder: EncoderParams, classifier: ClassifierParams) -> None:
    h, d = encoder.W1.shape
    e = encoder.W2.shape[0]
    k = classifier.W.shape[0]
    parts = [struct.pack("<4sI", CHECKPOINT_MAGIC, CHECKPOINT_VERSION)]
    parts.append(struct.pack("<4I", d, h, e, k))
    for arr in (encoder.W1, encoder.b1, encoder.W2, encoder.b2, classifier.W, classifier.b):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, ClassifierParams]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 24:
        raise ValidationError("checkpoint truncated: header incomplete")
    magic, version = struct.unpack_from("<4sI", blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ValidationError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {version}")
    d, h, e, k = struct.unpack_from("<4I", blob, 8)
    shapes = [(h, d), (h,), (e, h), (e,), (k, e), (k,)]
    expected = 24 + sum(int(np.prod(s)) for s in shapes) * 8
    if len(blob) != expected:
        raise ValidationError(
            f"checkpoint truncated or oversized: expected {expected} bytes, got {len(blob)}"
        )
    offset = 24
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        arrays.append(arr)
        offset += count * 8
    encoder = EncoderParams(W1=arrays[0], b1=arrays[1], W2=arrays[2], b2=arrays[3])
    classifier = ClassifierParams(W=arrays[4], b=arrays[5])
    return encoder, classifier


# ---------------------------------------------------------------------------
# Sub-cluster assignments

def assignment_to_object(assignment: SubclusterAssignment) -> dict:
    classes = []
    for c, cc in sorted(assignment.per_class.items()):
        classes.append(
            {
                "label": int(c),
                "cluster_count": int(cc.cluster_count),
                "cluster_sizes": cc.cluster_sizes.tolist(),
                "members": cc.members.tolist(),
                "assignment": cc.assignment.tolist(),
                "centroids": cc.centroids.tolist(),
            }
        )
    return {"capacity": int(assignment.capacity), "classes": classes}


def save_assignment(assignment: SubclusterAssignment, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(assignment_to_object(assignment), indent=2) + "\n", encoding="utf-8"
    )


def load_assignment(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"assignment file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if "capacity" not in obj or "classes" not in obj:
        raise ValidationError(f"{path}: not an assignment file")
    return obj
