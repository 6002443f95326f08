"""From reconstruction to anomaly scores, masks, and bounding boxes.

Loads the checkpoint written by demo 02 (run that first), scores the test
split with all four score variants, then walks one abnormal image through
the difference map, the saliency threshold, and the box extraction.

    python demos/02_training_walkthrough.py
    python demos/03_scoring_and_localization.py
"""

from pathlib import Path

import numpy as np
import torch

from railscan import data, inference, metrics
from railscan.checkpoint import load_checkpoint
from railscan.datagen import read_manifest
from railscan.model import decode, encode

run = Path("demo_output/training")
if not (run / "model.ckpt").exists():
    raise SystemExit("run demos/02_training_walkthrough.py first")

ckpt = load_checkpoint(run / "model.ckpt")
manifest = read_manifest(run / "dataset")
test_rows = manifest.test_rows
test_images = data.load_images(manifest, test_rows)
labels = np.array([r.label == "abnormal" for r in test_rows])

# The mask threshold adapts to the model: the 99.5th percentile of saliency
# over the normal training pool.
train_images = data.load_images(manifest, manifest.train_rows)
pool = inference.normal_saliency_pool(ckpt, train_images)
policy = inference.QuantileThreshold(pool, 0.995)
print(f"saliency threshold from normal pool: {policy.resolve():.4f}")

for variant in ("l1", "l2", "bottleneck", "encoded"):
    results = inference.score_dataset(ckpt, test_images, variant, batch_size=8)
    scores = np.array([r.score for r in results])
    print(f"{variant:>10}: AUROC {metrics.auroc(scores, labels):.3f}  "
          f"normal mean {scores[~labels].mean():.4f}  abnormal mean {scores[labels].mean():.4f}")

# Image-level scores come from the encoder's last feature stage; pixel-level
# localization comes from M = x - x_hat - C.
row = next(r for r in test_rows if r.label == "abnormal")
x = torch.from_numpy(data.load_image(manifest.root / row.path)).unsqueeze(0)
with torch.no_grad():
    z, _ = encode(ckpt.encoder, x, "instance")
    x_hat = decode(ckpt.decoder, z, "instance")
m = inference.difference_map(x[0], x_hat[0], ckpt.error_map)
detection = inference.localize(m, policy, min_area=20)
print(f"{row.path}: {len(detection.boxes)} box(es)")
for box in detection.boxes:
    print(f"  ({box.x_min}, {box.y_min}) - ({box.x_max}, {box.y_max})  area {box.area}px")

gt = data.load_mask(manifest, row)
s = inference.saliency(m)
print(f"mean |M| inside ground truth {s[gt].mean():.4f} vs outside {s[~gt].mean():.4f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib import patches

    fig, axes = plt.subplots(1, 4, figsize=(14, 4))
    panels = [
        (((x[0].numpy().transpose(1, 2, 0) + 1) / 2).clip(0, 1), "input"),
        (((x_hat[0].numpy().transpose(1, 2, 0) + 1) / 2).clip(0, 1), "reconstruction"),
        (s, "saliency of M"),
        (detection.mask, "mask + boxes"),
    ]
    for ax, (img, title) in zip(axes, panels):
        ax.imshow(img, cmap=None if img.ndim == 3 else "magma")
        ax.set_title(title)
        ax.axis("off")
    for box in detection.boxes:
        axes[3].add_patch(patches.Rectangle(
            (box.x_min - 0.5, box.y_min - 0.5),
            box.x_max - box.x_min + 1, box.y_max - box.y_min + 1,
            fill=False, edgecolor="lime", linewidth=1.5,
        ))
    fig.tight_layout()
    out = Path("demo_output/localization.png")
    fig.savefig(out, dpi=120)
    print("wrote", out)
except ImportError:
    print("matplotlib not installed; skipping the panel figure")
