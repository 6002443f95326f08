"""Scratch: per-shape-kind encoded/l1 score analysis on the saved checkpoint."""
import numpy as np
import torch

from railscan import datagen, inference, metrics
from railscan.checkpoint import load_checkpoint

ckpt = load_checkpoint("/tmp/calib.ckpt")
params = datagen.SceneParams()

normals = np.stack([datagen.generate_normal(params, 900_000 + i) for i in range(50)])
normals_t = torch.from_numpy(normals)

for kind in ("rectangle", "ellipse", "polygon", "texture"):
    spec = datagen.AnomalySpec(shapes=(kind,))
    abn = []
    fracs = []
    for i in range(50):
        base = datagen.generate_normal(params, 910_000 + i)
        img, mask = datagen.composite_anomaly(base, spec, 920_000 + i)
        abn.append(img)
        fracs.append(mask.mean())
    abn_t = torch.from_numpy(np.stack(abn))
    for variant in ("encoded", "l1"):
        rn = inference.score_dataset(ckpt, normals_t, variant, batch_size=8)
        ra = inference.score_dataset(ckpt, abn_t, variant, batch_size=8)
        s = np.array([r.score for r in rn] + [r.score for r in ra])
        y = np.array([0] * 50 + [1] * 50)
        print(f"{kind:>10} {variant:>8}: auroc={metrics.auroc(s, y):.4f} "
              f"norm={s[:50].mean():.4f} abn={s[50:].mean():.4f}")
    # correlation of encoded score with area
    enc_scores = np.array([r.score for r in inference.score_dataset(ckpt, abn_t, 'encoded', batch_size=8)])
    corr = np.corrcoef(np.array(fracs), enc_scores)[0, 1]
    print(f"{kind:>10}  area-corr(encoded)={corr:.2f}  min_frac={min(fracs):.3f}")
