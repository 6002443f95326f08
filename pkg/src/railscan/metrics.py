"""ROC/PR curves, threshold metrics, equal error rate, and density estimates.

Scores are real-valued anomaly scores; labels are binary with positive =
abnormal. The decision rule everywhere is "predict positive iff score >= t",
and curve thresholds are the de-duplicated scores in descending order, so
every curve point corresponds to realizable confusion counts.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class CurvePoints:
    """Operating points (x, y) plus the threshold inducing each point."""

    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    #: False when TP + FP == 0 (precision reported as 0 by convention).
    precision_defined: bool = True


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    auprc: float
    eer: float
    precision: float
    recall: float
    f1: float
    threshold: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return asdict(self)


def _validate_scored_set(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"scores and labels differ in length: {scores.size} vs {labels.size}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not labels.any() or labels.all():
        raise ValueError("curve metrics need at least one positive and one negative label")
    return scores, labels


def _cumulative_counts(scores: np.ndarray, labels: np.ndarray):
    """TP/FP counts at each de-duplicated descending threshold."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # last index of each run of equal scores = counts with rule score >= s
    distinct = np.nonzero(np.diff(s))[0]
    idx = np.r_[distinct, s.size - 1]
    tps = np.cumsum(y)[idx]
    fps = np.cumsum(~y)[idx]
    return s[idx], tps.astype(float), fps.astype(float)


def roc_curve(scores, labels) -> CurvePoints:
    """TPR vs FPR at every distinct threshold, anchored to start at (0, 0).

    The synthetic starting point carries threshold +inf; the curve always
    ends at (1, 1) because the lowest threshold predicts everything positive.
    """
    scores, labels = _validate_scored_set(scores, labels)
    thr, tps, fps = _cumulative_counts(scores, labels)
    p = labels.sum()
    n = labels.size - p
    fpr = np.r_[0.0, fps / n]
    tpr = np.r_[0.0, tps / p]
    return CurvePoints(x=fpr, y=tpr, thresholds=np.r_[np.inf, thr])


def auroc(scores, labels) -> float:
    """Area under the ROC; ties contribute half, matching the pairwise rank
    statistic (#concordant + 0.5 #tied) / (P * N)."""
    curve = roc_curve(scores, labels)
    return float(np.trapezoid(curve.y, curve.x))


def pr_curve(scores, labels) -> CurvePoints:
    """Precision vs recall at every distinct threshold (descending)."""
    scores, labels = _validate_scored_set(scores, labels)
    thr, tps, fps = _cumulative_counts(scores, labels)
    p = labels.sum()
    recall = tps / p
    precision = tps / (tps + fps)
    return CurvePoints(x=recall, y=precision, thresholds=thr)


def auprc(scores, labels) -> float:
    """Average precision: sum of (r_n - r_{n-1}) * p_n with r_0 = 0."""
    curve = pr_curve(scores, labels)
    dr = np.diff(np.r_[0.0, curve.x])
    return float(np.sum(dr * curve.y))


def eer(roc: CurvePoints) -> float:
    """False-positive rate where the ROC crosses TPR = 1 - FPR.

    Walks the piecewise-linear curve; g = TPR + FPR - 1 rises monotonically
    from -1 to +1, so the first sign change brackets the crossing and linear
    interpolation inside that segment gives the exact intersection.
    """
    fpr, tpr = np.asarray(roc.x, dtype=float), np.asarray(roc.y, dtype=float)
    g = tpr + fpr - 1.0
    if g[0] >= 0.0:
        return float(fpr[0])
    for i in range(1, g.size):
        if g[i] >= 0.0:
            u = -g[i - 1] / (g[i] - g[i - 1])
            return float(fpr[i - 1] + u * (fpr[i] - fpr[i - 1]))
    return float(fpr[-1])


def eer_point(roc: CurvePoints) -> tuple[float, float]:
    """Interpolated (FPR, TPR) at the equal-error crossing."""
    rate = eer(roc)
    return rate, 1.0 - rate


def prf_at_threshold(scores, labels, threshold: float) -> PRF:
    """Precision/recall/F1 with the rule "positive iff score >= threshold"."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    pred = scores >= threshold
    tp = float(np.sum(pred & labels))
    fp = float(np.sum(pred & ~labels))
    fn = float(np.sum(~pred & labels))
    defined = (tp + fp) > 0
    precision = tp / (tp + fp) if defined else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return PRF(precision=precision, recall=recall, f1=f1, precision_defined=defined)


def eer_threshold(roc: CurvePoints) -> float:
    """Realized threshold whose ROC point lies nearest the EER crossing.

    The synthetic (0, 0) anchor (threshold +inf) is not a realized threshold
    and is skipped.
    """
    fx, fy = eer_point(roc)
    realized = np.isfinite(roc.thresholds)
    d2 = (roc.x[realized] - fx) ** 2 + (roc.y[realized] - fy) ** 2
    return float(roc.thresholds[realized][int(np.argmin(d2))])


def evaluate_scores(scores, labels) -> EvalReport:
    """Full scalar report: AUROC, AP, EER, and PRF at the EER-nearest threshold."""
    scores, labels = _validate_scored_set(scores, labels)
    roc = roc_curve(scores, labels)
    tau = eer_threshold(roc)
    prf = prf_at_threshold(scores, labels, tau)
    return EvalReport(
        auroc=float(np.trapezoid(roc.y, roc.x)),
        auprc=auprc(scores, labels),
        eer=eer(roc),
        precision=prf.precision,
        recall=prf.recall,
        f1=prf.f1,
        threshold=tau,
        n_pos=int(labels.sum()),
        n_neg=int((~labels).sum()),
    )


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule of thumb; falls back to 1.0 for degenerate samples."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n < 2:
        return 1.0
    std = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75.0, 25.0])
    iqr = float(q75 - q25)
    scale = min(x for x in (std, iqr / 1.34) if x > 0) if (std > 0 or iqr > 0) else 0.0
    if scale <= 0:
        return 1.0
    return 0.9 * scale * n ** (-0.2)


def kde(values, bandwidth: float | str = "auto", grid: np.ndarray | None = None,
        grid_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density estimate on a uniform grid.

    With ``bandwidth="auto"`` the bandwidth follows Silverman's rule; the
    default grid spans [min - 3h, max + 3h] with ``grid_size`` points. Pass
    an explicit ``grid`` to evaluate several samples on a shared axis.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("kde needs at least one value")
    h = silverman_bandwidth(values) if bandwidth == "auto" else float(bandwidth)
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if grid is None:
        grid = np.linspace(values.min() - 3 * h, values.max() + 3 * h, grid_size)
    u = (grid[:, None] - values[None, :]) / h
    density = np.exp(-0.5 * u * u).sum(axis=1) / (values.size * h * np.sqrt(2 * np.pi))
    return grid, density
