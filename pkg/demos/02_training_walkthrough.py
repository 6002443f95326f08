"""Training the reconstruction pair against the discriminator.

A desk-scale run: a small normal-only training set, a short adversarial
schedule, the error map, and the loss trajectory. Expect a few minutes on a
laptop CPU. Run from the repo root:

    python demos/02_training_walkthrough.py
"""

from pathlib import Path

import numpy as np
import torch

from railscan import data
from railscan.checkpoint import Checkpoint, save_checkpoint
from railscan.datagen import AnomalySpec, SceneParams, build_dataset
from railscan.training import TrainConfig, compute_error_map, train, write_train_log

out = Path("demo_output/training")
out.mkdir(parents=True, exist_ok=True)

manifest = build_dataset(
    train_normal=64, test_normal=10, test_abnormal=10,
    params=SceneParams(), anomaly=AnomalySpec(), out_dir=out / "dataset", seed=1,
)
images = data.load_images(manifest, manifest.train_rows)
print(f"training on {images.shape[0]} normal images")

# Published defaults except the shortened schedule: AdamW with betas
# (0.5, 0.9), lr 2e-4, one discriminator step per autoencoder step.
cfg = TrainConfig(epochs=6, batch_size=16, seed=1)
ckpt, log = train(cfg, images, verbose=True)
print(f"generator loss: {log.records[0].loss_eg:.1f} -> {log.records[-1].loss_eg:.1f}")

# The error map is the mean absolute training residual; inference subtracts
# it so systematic reconstruction error does not masquerade as an anomaly.
error_map = compute_error_map(ckpt.encoder, ckpt.decoder, images)
print(f"error map shape {tuple(error_map.shape)}, mean {float(error_map.mean()):.4f}")

ckpt = Checkpoint(ckpt.encoder, ckpt.decoder, ckpt.discriminator, error_map, cfg)
save_checkpoint(out / "model.ckpt", ckpt)
write_train_log(out / "train_log.csv", log)
print("wrote", out / "model.ckpt")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    epochs = [r.epoch for r in log.records]
    ax1.plot(epochs, [r.loss_eg for r in log.records], label="generator")
    ax1.set_xlabel("epoch"); ax1.set_ylabel("loss"); ax1.legend()
    ax2.plot(epochs, [r.d_real_mean for r in log.records], label="D(x)")
    ax2.plot(epochs, [r.d_fake_mean for r in log.records], label="D(x_hat)")
    ax2.set_xlabel("epoch"); ax2.set_ylabel("mean discriminant"); ax2.legend()
    fig.tight_layout()
    fig.savefig(out / "training_curves.png", dpi=120)
    print("wrote", out / "training_curves.png")
except ImportError:
    print("matplotlib not installed; skipping curves")
