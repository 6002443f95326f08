"""Scratch calibration of the end-to-end synthetic gate (not part of the package)."""
import time

import numpy as np
import torch

from railscan import datagen, data, inference, metrics
from railscan.checkpoint import Checkpoint
from railscan.training import TrainConfig, train, compute_error_map

t0 = time.time()
root = "/tmp/calib_ds"
man = datagen.build_dataset(256, 50, 50, datagen.SceneParams(), datagen.AnomalySpec(), root, seed=7)
print(f"dataset: {len(man.rows)} rows in {time.time()-t0:.1f}s")

train_imgs = data.load_images(man, man.train_rows)
test_rows = man.test_rows
test_imgs = data.load_images(man, test_rows)
labels = np.array([r.label == "abnormal" for r in test_rows])

cfg = TrainConfig(epochs=15, batch_size=24, seed=7)
t1 = time.time()
ckpt, log = train(cfg, train_imgs, verbose=True)
print(f"train: {time.time()-t1:.1f}s  first={log.records[0].loss_eg:.4f} last={log.records[-1].loss_eg:.4f}")

emap = compute_error_map(ckpt.encoder, ckpt.decoder, train_imgs)
ckpt = Checkpoint(ckpt.encoder, ckpt.decoder, ckpt.discriminator, emap, cfg)

for variant in ("encoded", "l1", "l2", "bottleneck"):
    res = inference.score_dataset(ckpt, test_imgs, variant, batch_size=8)
    scores = np.array([r.score for r in res])
    auc = metrics.auroc(scores, labels)
    print(f"{variant:>10}: auroc={auc:.4f}  mean_norm={scores[~labels].mean():.5f} mean_abn={scores[labels].mean():.5f}")

# localization gate: mean |M| inside GT mask vs outside
hits = 0
abn = [r for r in test_rows if r.label == "abnormal"]
with torch.no_grad():
    for r in abn:
        x = torch.from_numpy(data.load_image(man.root / r.path)).unsqueeze(0)
        from railscan.model import encode, decode
        z, _ = encode(ckpt.encoder, x, "instance")
        xh = decode(ckpt.decoder, z, "instance")
        m = (x[0] - xh[0] - emap).numpy()
        s = np.abs(m).mean(axis=0)
        gt = data.load_mask(man, r)
        if s[gt].mean() > s[~gt].mean():
            hits += 1
print(f"localization: {hits}/{len(abn)} inside>outside  total {time.time()-t0:.1f}s")

from railscan.checkpoint import save_checkpoint
save_checkpoint("/tmp/calib.ckpt", ckpt)
print("saved /tmp/calib.ckpt")
