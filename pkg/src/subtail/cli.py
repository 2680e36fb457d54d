"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
abort. Progress goes to stderr; stdout carries only machine-readable
results (JSON objects or CSV tables).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from subtail import data_io, trainer
from subtail.clustering import ClusterConfig, subcluster_all
from subtail.core import (
    RandomSource,
    SubtailError,
    TrainingAbortError,
    unit_normalize_rows,
)


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageExit(message)


def _diag(message: str) -> None:
    flat = " ".join(str(message).split())
    print(f"subtail: error: {flat}", file=sys.stderr)


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, indent=2))


def build_parser() -> _Parser:
    parser = _Parser(prog="subtail", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic long-tailed feature CSV")
    p.add_argument("--spec", required=True, help="synthetic spec YAML")
    p.add_argument("--out", required=True, help="output feature CSV")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("cluster", help="sub-cluster a feature CSV in its own feature space")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=int, default=10)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output assignment JSON")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("train", help="train on a feature CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True, help="training config YAML")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a finished run on a split")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--split", required=True, choices=("valid", "test"))
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="run the schedule/reweighting ablation suite")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("report", help="dump a run report")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--format", required=True, choices=("json", "csv"))
    p.set_defaults(func=_cmd_report)

    return parser


def _cmd_generate(args: argparse.Namespace) -> int:
    spec, _ = data_io.load_synthetic_spec(args.spec)
    dataset = data_io.generate_synthetic(spec)
    data_io.save_features(dataset, args.out)
    _progress(f"wrote {dataset.num_samples} samples to {args.out}")
    _emit(
        {
            "out": args.out,
            "samples": dataset.num_samples,
            "classes": dataset.num_classes,
            "dim": dataset.dim,
            "class_counts": dataset.class_counts.tolist(),
        }
    )
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    dataset = data_io.load_features(args.data)
    embeddings = unit_normalize_rows(dataset.features)
    config = ClusterConfig(
        delta=args.delta,
        iterations=args.iters,
        seed=RandomSource(args.seed, "cluster-seed"),
    )
    assignment = subcluster_all(embeddings, dataset.labels, config)
    data_io.save_assignment(assignment, args.out)
    _progress(f"clustered {dataset.num_samples} samples into capacity-{assignment.capacity} clusters")
    _emit(
        {
            "out": args.out,
            "capacity": assignment.capacity,
            "classes": [
                {
                    "label": int(c),
                    "cluster_count": cc.cluster_count,
                    "max_size": int(cc.cluster_sizes.max()),
                    "sizes": cc.cluster_sizes.tolist(),
                }
                for c, cc in sorted(assignment.per_class.items())
            ],
        }
    )
    return 0


def _train_once(data_path: str, config_path: str, out_dir: str) -> tuple[data_io.RunReport, trainer.TrainResult]:
    run_config = data_io.load_run_config(config_path)
    dataset = data_io.load_features(data_path)
    split = data_io.make_split(dataset, run_config.split)
    started = time.perf_counter()
    result = trainer.train(dataset, run_config.train, split.train)
    metrics = {
        "train": trainer.evaluate(result.encoder, result.classifier, dataset, split.train).to_dict(),
        "valid": trainer.evaluate(result.encoder, result.classifier, dataset, split.valid).to_dict(),
        "test": trainer.evaluate(result.encoder, result.classifier, dataset, split.test).to_dict(),
    }
    wall = time.perf_counter() - started
    report = data_io.RunReport(
        config_text=run_config.text,
        data_path=data_path,
        epochs=result.records,
        metrics=metrics,
        weights=[data_io.weight_event_to_dict(e) for e in result.weight_events],
        wall_clock_seconds=wall,
    )
    data_io.save_report(report, out_dir)
    data_io.save_checkpoint(Path(out_dir) / "checkpoint.bin", result.encoder, result.classifier)
    return report, result


def _cmd_train(args: argparse.Namespace) -> int:
    report, _ = _train_once(args.data, args.config, args.out)
    _progress(f"run complete in {report.wall_clock_seconds:.1f}s; report in {args.out}")
    _emit(
        {
            "out": args.out,
            "metrics": {
                split: {
                    "balanced_accuracy": m["balanced_accuracy"],
                    "balanced_f1": m["balanced_f1"],
                }
                for split, m in report.metrics.items()
            },
        }
    )
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    report = data_io.load_report(args.run)
    encoder, classifier = data_io.load_checkpoint(Path(args.run) / "checkpoint.bin")
    run_config = data_io.parse_run_config_text(report.config_text)
    dataset = data_io.load_features(report.data_path)
    split = data_io.make_split(dataset, run_config.split)
    indices = split.valid if args.split == "valid" else split.test
    metrics = trainer.evaluate(encoder, classifier, dataset, indices)
    _emit({"split": args.split, **metrics.to_dict()})
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    run_config = data_io.load_run_config(args.config)
    dataset = data_io.load_features(args.data)
    split = data_io.make_split(dataset, run_config.split)
    rows = trainer.run_ablation_suite(dataset, run_config.train, split.train, split.test)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    _progress(f"ablation table written to {out_dir / 'ablation.json'}")
    print("table,variant,balanced_accuracy,balanced_f1")
    for row in rows:
        print(
            f"{row['table']},{row['variant']},"
            f"{row['balanced_accuracy']!r},{row['balanced_f1']!r}"
        )
    return 0


def _report_csv_rows(report: data_io.RunReport) -> list[tuple[str, str, str]]:
    rows: list[tuple[str, str, str]] = []
    for rec in report.epochs:
        section = f"epoch.{rec.epoch}"
        rows.append((section, "contrastive_loss", repr(rec.contrastive_loss)))
        if rec.classification_loss is not None:
            rows.append((section, "classification_loss", repr(rec.classification_loss)))
    for split, metrics in report.metrics.items():
        section = f"metrics.{split}"
        rows.append((section, "balanced_accuracy", repr(metrics["balanced_accuracy"])))
        rows.append((section, "balanced_f1", repr(metrics["balanced_f1"])))
        for k, r in enumerate(metrics["per_class_recall"]):
            rows.append((section, f"recall[{k}]", repr(r)))
        for j, row in enumerate(metrics["confusion"]):
            for k, v in enumerate(row):
                rows.append((section, f"confusion[{j}][{k}]", repr(v)))
    for event in report.weights:
        section = f"weights.epoch.{event['epoch']}"
        for k, w in enumerate(event["omega"]):
            rows.append((section, f"omega[{k}]", repr(w)))
    return rows


def _cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    report = data_io.load_report(run_dir)
    if args.format == "json":
        # emit exactly what is stored
        sys.stdout.write((run_dir / "report.json").read_text(encoding="utf-8"))
        return 0
    print("section,key,value")
    for section, key, value in _report_csv_rows(report):
        print(f"{section},{key},{value}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as exc:
        _diag(f"usage: {exc}")
        return 1
    try:
        return args.func(args)
    except TrainingAbortError as exc:
        _diag(f"numerical-abort: {exc}")
        return 3
    except (SubtailError, OSError) as exc:
        _diag(f"data: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
