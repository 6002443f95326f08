"""The four CLI commands wired end to end on a small run.

Equivalent shell session:

    railscan gen-data --config run.yaml
    railscan train    --config run.yaml
    railscan eval     --config run.yaml --variant all --out demo_output/cli/eval
    railscan report   demo_output/cli/eval/scores_encoded.csv --out demo_output/cli/report

    python demos/05_cli_pipeline.py
"""

from pathlib import Path

import yaml

from railscan.cli import main

root = Path("demo_output/cli")
root.mkdir(parents=True, exist_ok=True)

config = {
    "seed": 2,
    "dataset_dir": str(root / "dataset"),
    "checkpoint": str(root / "model.ckpt"),
    "train": {"epochs": 4, "batch_size": 16},
    "datagen": {"train_normal": 48, "test_normal": 10, "test_abnormal": 10},
}
config_path = root / "run.yaml"
config_path.write_text(yaml.safe_dump(config))
print("config:", config_path)

for argv in (
    ["gen-data", "--config", str(config_path)],
    ["train", "--config", str(config_path)],
    ["eval", "--config", str(config_path), "--variant", "all", "--out", str(root / "eval")],
    ["report", str(root / "eval" / "scores_encoded.csv"), "--out", str(root / "report")],
):
    print("\n$ railscan " + " ".join(argv))
    code = main(argv)
    if code != 0:
        raise SystemExit(f"command failed with exit code {code}")

print("\nartifacts:")
for p in sorted(root.rglob("*")):
    if p.is_file() and p.suffix in (".csv", ".json", ".ckpt", ".yaml", ".jsonl"):
        print(" ", p)
