"""Command-line entry points: gen-data, train, eval, report.

Every command validates its full configuration before touching the
filesystem, and is deterministic given the config and seed. Exit codes:
0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, datagen, inference, metrics
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_run_config
from .model import ShapeError
from .training import TrainingDiverged, compute_error_map, train, write_train_log

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_RUNTIME_ERRORS = (
    OSError,
    CheckpointError,
    TrainingDiverged,
    ShapeError,
    ValueError,
    RuntimeError,
)


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit code 2; we reserve 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "variant", None) not in (None, "all"):
        cfg = replace(cfg, variant=args.variant)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out_dir = args.out or cfg.dataset_dir
    if not out_dir:
        raise ConfigError("gen-data needs an output directory (--out or dataset_dir in the config)")
    g = cfg.datagen
    manifest = datagen.build_dataset(
        g.train_normal, g.test_normal, g.test_abnormal, g.scene, g.anomaly, out_dir, cfg.seed
    )
    print(f"wrote {len(manifest.rows)} images under {out_dir}")
    print(manifest.root / "manifest.csv")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.resume:
        raise ConfigError("resume is not supported; delete the checkpoint and retrain")
    cfg = _load_config(args)
    if not cfg.dataset_dir:
        raise ConfigError("train needs dataset_dir in the config")
    out_dir = Path(args.out) if args.out else None
    ckpt_path = Path(cfg.checkpoint) if cfg.checkpoint else (out_dir or Path("runs")) / "model.ckpt"

    manifest = datagen.read_manifest(cfg.dataset_dir)
    train_rows = manifest.train_rows
    if not train_rows:
        raise ValueError(f"no training images listed under {cfg.dataset_dir}")
    if any(r.label != "normal" for r in train_rows):
        raise ValueError("training split contains non-normal rows")
    images = data.load_images(manifest, train_rows)

    train_cfg = replace(cfg.resolved_train(), checkpoint_path=str(ckpt_path))
    ckpt, log = train(train_cfg, images, verbose=True)
    error_map = compute_error_map(ckpt.encoder, ckpt.decoder, images)
    ckpt = Checkpoint(ckpt.encoder, ckpt.decoder, ckpt.discriminator, error_map, train_cfg)
    save_checkpoint(ckpt_path, ckpt)
    write_train_log(ckpt_path.with_suffix(".log.csv"), log)
    print(ckpt_path)
    return EXIT_OK


def _eval_one_variant(ckpt, test_images, ids, labels, variant, policy, min_area, out_dir):
    results = inference.score_dataset(
        ckpt, test_images, variant,
        image_ids=ids, threshold_policy=policy, min_area=min_area, batch_size=8,
    )
    raw = np.array([r.score for r in results])
    scaled = inference.min_max_scale(raw)
    report = metrics.evaluate_scores(raw, labels)

    with open(out_dir / f"scores_{variant}.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "label_if_known", "raw_score", "scaled_score", "n_boxes"])
        for r, s, lab in zip(results, scaled, labels):
            n_boxes = len(r.detection.boxes) if r.detection else 0
            w.writerow([r.image_id, "abnormal" if lab else "normal", r.score, s, n_boxes])
    with open(out_dir / f"report_{variant}.json", "w") as f:
        json.dump(report.to_dict(), f, indent=2)

    if policy is not None:
        mask_dir = out_dir / "masks" / variant
        mask_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"boxes_{variant}.jsonl", "w") as f:
            for r in results:
                det = r.detection
                datagen.save_mask_png(mask_dir / f"{r.image_id}.png", det.mask)
                record = {
                    "image_id": r.image_id,
                    "score": r.score,
                    "boxes": [vars(b) for b in det.boxes],
                }
                f.write(json.dumps(record) + "\n")
    return report


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    ckpt_path = args.checkpoint or cfg.checkpoint
    data_dir = args.data or cfg.dataset_dir
    if not ckpt_path:
        raise ConfigError("eval needs a checkpoint (--checkpoint or config)")
    if not data_dir:
        raise ConfigError("eval needs a dataset (--data or dataset_dir in the config)")
    out_dir = Path(args.out or "eval")
    out_dir.mkdir(parents=True, exist_ok=True)

    ckpt = load_checkpoint(ckpt_path)
    if ckpt.error_map is None:
        raise ValueError(f"checkpoint {ckpt_path} has no error map")
    manifest = datagen.read_manifest(data_dir)
    test_rows = manifest.test_rows
    if not test_rows:
        raise ValueError(f"no test images listed under {data_dir}")
    test_images = data.load_images(manifest, test_rows)
    ids = [Path(r.path).stem for r in test_rows]
    labels = np.array([r.label == "abnormal" for r in test_rows])

    policy = None
    if manifest.train_rows:
        pool_images = data.load_images(manifest, manifest.train_rows)
        pool = inference.normal_saliency_pool(ckpt, pool_images)
        policy = inference.QuantileThreshold(pool, cfg.localization.quantile)
    else:
        print("note: no train split found; skipping masks and boxes", file=sys.stderr)

    variants = list(inference.SCORE_VARIANTS) if args.variant == "all" else [cfg.variant]
    rows = []
    for variant in variants:
        report = _eval_one_variant(
            ckpt, test_images, ids, labels, variant, policy, cfg.localization.min_area, out_dir
        )
        rows.append((variant, report))
        print(
            f"{variant:>10}  auroc={report.auroc:.4f}  auprc={report.auprc:.4f}  "
            f"eer={report.eer:.4f}  precision={report.precision:.4f}  "
            f"recall={report.recall:.4f}  f1={report.f1:.4f}"
        )
    with open(out_dir / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "auroc", "auprc", "eer", "precision", "recall", "f1"])
        for variant, r in rows:
            w.writerow([variant, r.auroc, r.auprc, r.eer, r.precision, r.recall, r.f1])
    print(out_dir / "summary.csv")
    return EXIT_OK


def _read_scores_csv(path: Path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        need = {"image_id", "label_if_known", "raw_score", "scaled_score"}
        if not need <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns {sorted(need)}")
        rows = list(reader)
    raw = np.array([float(r["raw_score"]) for r in rows])
    scaled = np.array([float(r["scaled_score"]) for r in rows])
    labels = np.array([r["label_if_known"] == "abnormal" for r in rows])
    known = np.array([r["label_if_known"] in ("normal", "abnormal") for r in rows])
    return raw, scaled, labels, known


def cmd_report(args) -> int:
    out_dir = Path(args.out or "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    sets = []
    for p in args.scores:
        path = Path(p)
        raw, scaled, labels, known = _read_scores_csv(path)
        if raw.size == 0:
            raise ValueError(f"{path}: no score rows")
        sets.append((path.stem, raw, scaled, labels, known))

    # shared density axis so the columns are comparable
    bandwidths = [metrics.silverman_bandwidth(s) for _, _, s, _, _ in sets]
    h = max(bandwidths)
    lo = min(s.min() for _, _, s, _, _ in sets) - 3 * h
    hi = max(s.max() for _, _, s, _, _ in sets) + 3 * h
    grid = np.linspace(lo, hi, 256)
    columns = []
    seen: dict[str, int] = {}
    for (name, _, scaled, _, _), bw in zip(sets, bandwidths):
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            name = f"{name}_{seen[name]}"
        _, density = metrics.kde(scaled, bandwidth=bw, grid=grid)
        columns.append((name, density))
    with open(out_dir / "kde.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["grid"] + [f"density_{name}" for name, _ in columns])
        for i, g in enumerate(grid):
            w.writerow([g] + [density[i] for _, density in columns])

    for name, raw, _, labels, known in sets:
        if not (labels[known].any() and (~labels[known]).any()):
            print(f"note: {name} lacks both labels; skipping curves", file=sys.stderr)
            continue
        roc = metrics.roc_curve(raw[known], labels[known])
        pr = metrics.pr_curve(raw[known], labels[known])
        with open(out_dir / f"roc_{name}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["threshold", "fpr", "tpr"])
            for t, x, y in zip(roc.thresholds, roc.x, roc.y):
                w.writerow([t, x, y])
        with open(out_dir / f"pr_{name}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["threshold", "recall", "precision"])
            for t, x, y in zip(pr.thresholds, pr.x, pr.y):
                w.writerow([t, x, y])
    print(out_dir / "kde.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="railscan", description="Rail-track anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="YAML run config")
        p.add_argument("--seed", type=int, metavar="N", help="override the run seed")
        p.add_argument("--out", metavar="DIR", help="output directory")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on the normal split of a dataset")
    common(p)
    p.add_argument("--resume", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a test split and report metrics")
    common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="trained checkpoint")
    p.add_argument("--data", metavar="DIR", help="dataset directory")
    p.add_argument(
        "--variant", choices=["l1", "l2", "bottleneck", "encoded", "all"],
        help="anomaly score variant (default from config: encoded)",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="density and curve tables from scores CSVs")
    p.add_argument("scores", nargs="+", metavar="SCORES_CSV")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"railscan: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RUNTIME_ERRORS as exc:
        print(f"railscan: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
