"""The evaluation toolkit on controlled score distributions.

No model needed: synthetic score sets show the ROC/PR machinery, the EER
crossing, threshold metrics, and the kernel density estimates used for the
report tables.

    python demos/04_metrics_tour.py
"""

from pathlib import Path

import numpy as np

from railscan import metrics
from railscan.inference import min_max_scale

rng = np.random.default_rng(0)
out = Path("demo_output")
out.mkdir(exist_ok=True)

# Two overlapping Gaussians: positives (abnormal) score higher on average.
normal_scores = rng.normal(0.0, 1.0, 300)
abnormal_scores = rng.normal(1.8, 1.2, 250)
scores = np.r_[normal_scores, abnormal_scores]
labels = np.r_[np.zeros(300, bool), np.ones(250, bool)]

report = metrics.evaluate_scores(scores, labels)
print(f"AUROC     {report.auroc:.4f}")
print(f"AUPRC     {report.auprc:.4f}   (baseline = positive fraction {labels.mean():.3f})")
print(f"EER       {report.eer:.4f}")
print(f"P/R/F1    {report.precision:.3f} / {report.recall:.3f} / {report.f1:.3f} "
      f"at threshold {report.threshold:.3f}")

# The EER point is where the ROC crosses TPR = 1 - FPR; the reported
# operating point is the nearest realized threshold.
roc = metrics.roc_curve(scores, labels)
fpr, tpr = metrics.eer_point(roc)
print(f"EER crossing at FPR {fpr:.4f}, TPR {tpr:.4f} (sum {fpr + tpr:.6f})")

# AUROC is a rank statistic: any strictly increasing transform leaves it
# unchanged, and tied scores contribute half.
assert metrics.auroc(np.exp(scores), labels) == report.auroc
print("rank invariance holds under exp()")

# Density estimates of the min-max-scaled scores, as used by the report
# command. Silverman bandwidth, 256-point grid, unit integral.
scaled = min_max_scale(scores)
grid, density_normal = metrics.kde(scaled[~labels])
_, density_abnormal = metrics.kde(scaled[labels], grid=grid)
print(f"normal-density integral {np.trapezoid(density_normal, grid):.4f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2, ax3) = plt.subplots(1, 3, figsize=(14, 4))
    ax1.plot(roc.x, roc.y)
    ax1.plot([0, 1], [1, 0], "k--", lw=0.8)
    ax1.plot([fpr], [tpr], "ro", label=f"EER {report.eer:.3f}")
    ax1.set_xlabel("FPR"); ax1.set_ylabel("TPR"); ax1.set_title("ROC"); ax1.legend()
    pr = metrics.pr_curve(scores, labels)
    ax2.plot(pr.x, pr.y)
    ax2.set_xlabel("recall"); ax2.set_ylabel("precision"); ax2.set_title("PR")
    ax3.plot(grid, density_normal, label="normal")
    ax3.plot(grid, density_abnormal, label="abnormal")
    ax3.set_xlabel("scaled score"); ax3.set_ylabel("density"); ax3.set_title("KDE"); ax3.legend()
    fig.tight_layout()
    fig.savefig(out / "metrics_tour.png", dpi=120)
    print("wrote", out / "metrics_tour.png")
except ImportError:
    print("matplotlib not installed; skipping plots")
