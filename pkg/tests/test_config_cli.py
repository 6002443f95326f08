import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from railscan.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from railscan.config import ConfigError, RunConfig, load_run_config, run_config_from_dict
from railscan.datagen import read_manifest


def test_defaults_match_published_training_setup():
    cfg = RunConfig()
    assert cfg.train.epochs == 100
    assert cfg.train.batch_size == 24
    assert cfg.train.learning_rate == pytest.approx(2e-4)
    assert (cfg.train.beta1, cfg.train.beta2) == (0.5, 0.9)
    assert cfg.train.k_d == 1 and cfg.train.k_ae == 1
    assert cfg.variant == "encoded"
    assert cfg.train.dropout_rate == 0.3
    assert cfg.localization.quantile == 0.995
    assert cfg.localization.min_area == 20


def test_yaml_round_trip(tmp_path):
    doc = {
        "seed": 3,
        "dataset_dir": "data",
        "checkpoint": "runs/m.ckpt",
        "variant": "l2",
        "train": {"epochs": 5, "batch_size": 6, "weight_decay": 0.02},
        "loss": {"use_latent": True},
        "model": {"dropout_rate": 0.2, "final_decoder_batch_norm": False},
        "localization": {"quantile": 0.99, "min_area": 10},
        "datagen": {"train_normal": 20, "scene": {"ballast_noise": 0.05}},
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    cfg = load_run_config(path)
    assert cfg.seed == 3
    assert cfg.variant == "l2"
    assert cfg.train.epochs == 5
    assert cfg.train.loss.use_latent is True
    assert cfg.train.dropout_rate == 0.2
    assert cfg.train.final_decoder_batch_norm is False
    assert cfg.localization.min_area == 10
    assert cfg.datagen.train_normal == 20
    assert cfg.datagen.scene.ballast_noise == 0.05
    resolved = cfg.resolved_train()
    assert resolved.seed == 3
    assert resolved.dataset_dir == "data"
    assert resolved.checkpoint_path == "runs/m.ckpt"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown top-level"):
        run_config_from_dict({"sead": 1})
    with pytest.raises(ConfigError, match="train: unknown keys"):
        run_config_from_dict({"train": {"epochz": 2}})
    with pytest.raises(ConfigError, match="datagen.scene: unknown keys"):
        run_config_from_dict({"datagen": {"scene": {"rail_glow": 1}}})
    with pytest.raises(ConfigError, match="model: unknown"):
        run_config_from_dict({"model": {"layers": 9}})


def test_misplaced_and_mistyped_keys_rejected():
    with pytest.raises(ConfigError, match="set elsewhere"):
        run_config_from_dict({"train": {"seed": 1}})
    with pytest.raises(ConfigError, match="expected an integer"):
        run_config_from_dict({"train": {"epochs": 2.5}})
    with pytest.raises(ConfigError, match="expected a boolean"):
        run_config_from_dict({"loss": {"use_pixel": "yes"}})
    with pytest.raises(ConfigError, match="variant"):
        run_config_from_dict({"variant": "ssim"})
    with pytest.raises(ConfigError, match="train.*epochs"):
        run_config_from_dict({"train": {"epochs": 0}})


def test_invalid_yaml_rejected(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("train: [unbalanced")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_run_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "missing.yaml")


def _write_config(tmp_path, **overrides) -> Path:
    doc = {
        "seed": 5,
        "dataset_dir": str(tmp_path / "ds"),
        "checkpoint": str(tmp_path / "runs" / "model.ckpt"),
        "train": {"epochs": 2, "batch_size": 6},
        "datagen": {"train_normal": 10, "test_normal": 3, "test_abnormal": 3},
    }
    doc.update(overrides)
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One gen-data + train pass shared by the CLI tests."""
    tmp_path = tmp_path_factory.mktemp("cli_pipeline")
    cfg_path = _write_config(tmp_path)
    assert main(["gen-data", "--config", str(cfg_path)]) == EXIT_OK
    assert main(["train", "--config", str(cfg_path)]) == EXIT_OK
    return tmp_path, cfg_path


def test_gen_data_writes_parseable_manifest(pipeline):
    tmp_path, _ = pipeline
    manifest = read_manifest(tmp_path / "ds")
    assert len(manifest.rows) == 16
    assert len(manifest.train_rows) == 10


def test_gen_data_invalid_counts_exit_usage(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, datagen={"train_normal": -1})
    code = main(["gen-data", "--config", str(cfg_path)])
    assert code == EXIT_USAGE
    assert "train_normal" in capsys.readouterr().err


def test_gen_data_without_out_dir(tmp_path, capsys):
    cfg_path = tmp_path / "bare.yaml"
    cfg_path.write_text("seed: 1\n")
    assert main(["gen-data", "--config", str(cfg_path)]) == EXIT_USAGE
    assert "output directory" in capsys.readouterr().err


def test_train_outputs(pipeline):
    tmp_path, _ = pipeline
    ckpt_path = tmp_path / "runs" / "model.ckpt"
    assert ckpt_path.exists()
    from railscan.checkpoint import load_checkpoint

    ckpt = load_checkpoint(ckpt_path)
    assert ckpt.error_map is not None
    log = (tmp_path / "runs" / "model.log.csv").read_text().strip().splitlines()
    assert len(log) == 1 + 2  # header + one row per epoch


def test_train_resume_refused(pipeline, capsys):
    _, cfg_path = pipeline
    assert main(["train", "--config", str(cfg_path), "--resume"]) == EXIT_USAGE
    assert "resume is not supported" in capsys.readouterr().err


def test_train_missing_dataset_exit_runtime(tmp_path):
    cfg_path = _write_config(tmp_path)  # dataset never generated
    assert main(["train", "--config", str(cfg_path)]) == EXIT_RUNTIME


def test_eval_outputs(pipeline):
    tmp_path, cfg_path = pipeline
    out = tmp_path / "eval"
    assert main(["eval", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK

    report = json.loads((out / "report_encoded.json").read_text())
    for key in ("auroc", "auprc", "eer", "precision", "recall", "f1"):
        assert key in report
    assert report["n_pos"] == 3 and report["n_neg"] == 3

    with open(out / "scores_encoded.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 6
    assert set(rows[0]) == {"image_id", "label_if_known", "raw_score", "scaled_score", "n_boxes"}

    masks = list((out / "masks" / "encoded").glob("*.png"))
    assert len(masks) == 6
    boxes = (out / "boxes_encoded.jsonl").read_text().strip().splitlines()
    assert len(boxes) == 6
    record = json.loads(boxes[0])
    assert set(record) == {"image_id", "score", "boxes"}


def test_eval_deterministic(pipeline):
    tmp_path, cfg_path = pipeline
    out_a, out_b = tmp_path / "eval_a", tmp_path / "eval_b"
    assert main(["eval", "--config", str(cfg_path), "--out", str(out_a)]) == EXIT_OK
    assert main(["eval", "--config", str(cfg_path), "--out", str(out_b)]) == EXIT_OK
    assert (out_a / "report_encoded.json").read_bytes() == (out_b / "report_encoded.json").read_bytes()
    assert (out_a / "scores_encoded.csv").read_bytes() == (out_b / "scores_encoded.csv").read_bytes()


def test_eval_all_variants_summary(pipeline):
    tmp_path, cfg_path = pipeline
    out = tmp_path / "eval_all"
    assert main(["eval", "--config", str(cfg_path), "--out", str(out), "--variant", "all"]) == EXIT_OK
    with open(out / "summary.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["variant"] for r in rows] == ["l1", "l2", "bottleneck", "encoded"]
    assert set(rows[0]) == {"variant", "auroc", "auprc", "eer", "precision", "recall", "f1"}


def test_eval_empty_test_dir_exit_runtime(pipeline, tmp_path, capsys):
    _, cfg_path = pipeline
    empty = tmp_path / "empty_ds"
    from railscan.datagen import build_dataset, SceneParams, AnomalySpec

    build_dataset(2, 0, 0, SceneParams(), AnomalySpec(), empty, seed=1)
    code = main(["eval", "--config", str(cfg_path), "--data", str(empty)])
    assert code == EXIT_RUNTIME
    assert "no test images" in capsys.readouterr().err


def test_eval_missing_checkpoint_flag(tmp_path, capsys):
    cfg_path = tmp_path / "bare.yaml"
    cfg_path.write_text("seed: 1\n")
    assert main(["eval", "--config", str(cfg_path)]) == EXIT_USAGE


def test_report_outputs(pipeline):
    tmp_path, cfg_path = pipeline
    out = tmp_path / "eval_report_src"
    main(["eval", "--config", str(cfg_path), "--out", str(out)])
    scores_csv = out / "scores_encoded.csv"
    rep = tmp_path / "report"
    assert main(["report", str(scores_csv), str(scores_csv), "--out", str(rep)]) == EXIT_OK

    with open(rep / "kde.csv", newline="") as f:
        header = f.readline().strip().split(",")
    assert header[0] == "grid"
    assert len(header) == 3  # two density columns for two inputs

    grid, dens = [], []
    with open(rep / "kde.csv", newline="") as f:
        for row in csv.DictReader(f):
            grid.append(float(row["grid"]))
            dens.append(float(row[header[1]]))
    integral = np.trapezoid(np.array(dens), np.array(grid))
    assert 0.99 <= integral <= 1.01

    with open(rep / "roc_scores_encoded.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert (float(rows[0]["fpr"]), float(rows[0]["tpr"])) == (0.0, 0.0)
    assert (float(rows[-1]["fpr"]), float(rows[-1]["tpr"])) == (1.0, 1.0)
    assert (rep / "pr_scores_encoded.csv").exists()


def test_usage_errors_exit_one(capsys):
    assert main(["no-such-command"]) == EXIT_USAGE
    assert main(["eval", "--variant", "bogus"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
