"""Scratch: sweep narrowed scene configs for the three gate statistics."""
import sys
import time

import numpy as np
import torch

from railscan import datagen, data, inference, metrics
from railscan.checkpoint import Checkpoint
from railscan.model import encode, decode
from railscan.training import TrainConfig, train, compute_error_map

label = sys.argv[1]
scene = datagen.SceneParams(
    rail_width=(6, 8),
    rail_spacing=(56, 66),
    sleeper_period=(28, 36),
)
anomaly = datagen.AnomalySpec() if label == "A" else datagen.AnomalySpec(contrast_offset=(0.55, 0.95))

t0 = time.time()
root = f"/tmp/sweep_{label}"
man = datagen.build_dataset(256, 50, 50, scene, anomaly, root, seed=7)
train_imgs = data.load_images(man, man.train_rows)
test_rows = man.test_rows
test_imgs = data.load_images(man, test_rows)
labels = np.array([r.label == "abnormal" for r in test_rows])

ckpt, log = train(TrainConfig(epochs=15, batch_size=24, seed=7), train_imgs)
emap = compute_error_map(ckpt.encoder, ckpt.decoder, train_imgs)
ckpt = Checkpoint(ckpt.encoder, ckpt.decoder, ckpt.discriminator, emap, None)
print(f"[{label}] loss {log.records[0].loss_eg:.0f} -> {log.records[-1].loss_eg:.0f}, emap mean {float(emap.mean()):.3f}")

for variant in ("encoded", "l1"):
    res = inference.score_dataset(ckpt, test_imgs, variant, batch_size=8)
    s = np.array([r.score for r in res])
    print(f"[{label}] {variant:>8}: auroc={metrics.auroc(s, labels):.4f}")

hits = 0
abn = [r for r in test_rows if r.label == "abnormal"]
with torch.no_grad():
    for r in abn:
        x = torch.from_numpy(data.load_image(man.root / r.path)).unsqueeze(0)
        z, _ = encode(ckpt.encoder, x, "instance")
        xh = decode(ckpt.decoder, z, "instance")
        s_map = np.abs((x[0] - xh[0] - emap).numpy()).mean(axis=0)
        gt = data.load_mask(man, r)
        if s_map[gt].mean() > s_map[~gt].mean():
            hits += 1
print(f"[{label}] localization {hits}/50   ({time.time()-t0:.0f}s)")
