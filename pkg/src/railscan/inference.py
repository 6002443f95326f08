"""Test-time scoring, difference maps, and pixel-level localization.

Each test image is encoded, reconstructed, and compared with the input:
a scalar anomaly score (four selectable variants) decides image-level
abnormality, and the difference map M = x - x_hat - C (C the training-set
error map) drives masks and bounding boxes. Single images are normalized
with their own instance statistics; the batched path applies the same
per-sample statistics, so batching only changes arithmetic order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from .checkpoint import Checkpoint
from .model import (
    IMAGE_CHANNELS,
    IMAGE_SIZE,
    NetworkSpec,
    ShapeError,
    decode,
    encode,
)

SCORE_VARIANTS = ("l1", "l2", "bottleneck", "encoded")


@dataclass(frozen=True)
class Box:
    """Tight bounding box with inclusive pixel coordinates."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int
    area: int


@dataclass
class Detection:
    score: float
    mask: np.ndarray  # boolean (128, 128)
    boxes: list[Box]


@dataclass
class ImageResult:
    image_id: str
    score: float
    detection: Detection | None


@dataclass(frozen=True)
class QuantileThreshold:
    """Mask threshold as a quantile of pooled normal-image saliency."""

    reference: np.ndarray
    quantile: float = 0.995

    def resolve(self) -> float:
        return float(np.quantile(self.reference, self.quantile))


#: A mask threshold is either a resolved float or a QuantileThreshold.
ThresholdPolicy = float | QuantileThreshold


def per_image_scores(
    x: torch.Tensor, x_hat: torch.Tensor, encoder: NetworkSpec, variant: str = "encoded"
) -> torch.Tensor:
    """Vector of per-image anomaly scores, one per sample."""
    if variant not in SCORE_VARIANTS:
        raise ValueError(f"variant must be one of {SCORE_VARIANTS}, got {variant!r}")
    if x.shape != x_hat.shape:
        raise ShapeError(f"score inputs differ in shape: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    with torch.no_grad():
        if variant == "l1":
            return (x - x_hat).abs().flatten(1).mean(dim=1)
        if variant == "l2":
            return (x - x_hat).flatten(1).pow(2).sum(dim=1).sqrt()
        if variant == "bottleneck":
            z, _ = encode(encoder, x, "instance")
            z_hat, _ = encode(encoder, x_hat, "instance")
            return (z - z_hat).abs().mean(dim=1)
        _, features = encode(encoder, x, "instance")
        _, features_hat = encode(encoder, x_hat, "instance")
        return (features[-1] - features_hat[-1]).abs().flatten(1).mean(dim=1)


def anomaly_score(
    x: torch.Tensor, x_hat: torch.Tensor, encoder: NetworkSpec, variant: str = "encoded"
) -> float:
    """Batch-mean anomaly score; the default compares the last encoder stage
    (256 x 5 x 5 = 6400 feature values) by mean absolute difference."""
    return float(per_image_scores(x, x_hat, encoder, variant).mean())


def difference_map(x: torch.Tensor, x_hat: torch.Tensor, error_map: torch.Tensor) -> torch.Tensor:
    """Signed residual M = x - x_hat - C for a single (3, 128, 128) image."""
    expected = (IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
    for name, t in (("x", x), ("x_hat", x_hat), ("error_map", error_map)):
        if tuple(t.shape) != expected:
            raise ShapeError(f"difference_map {name} must be {expected}, got {tuple(t.shape)}")
    return x - x_hat - error_map


def saliency(m: torch.Tensor | np.ndarray) -> np.ndarray:
    """Channel-mean of |M|: the (128, 128) field masks are thresholded on."""
    m = m.detach().cpu().numpy() if isinstance(m, torch.Tensor) else np.asarray(m)
    return np.abs(m).mean(axis=0)


def localize(m: torch.Tensor | np.ndarray, threshold_policy, min_area: int = 20) -> Detection:
    """Threshold the saliency of a difference map into a mask and boxes.

    ``threshold_policy`` is either a resolved float or a
    :class:`QuantileThreshold`. Components smaller than ``min_area`` pixels
    (8-connectivity) are discarded; each survivor yields one tight box.
    """
    tau = threshold_policy.resolve() if isinstance(threshold_policy, QuantileThreshold) else float(threshold_policy)
    s = saliency(m)
    mask = s > tau
    labeled, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    boxes: list[Box] = []
    keep = np.zeros_like(mask)
    for idx in range(1, count + 1):
        component = labeled == idx
        if component.sum() < min_area:
            continue
        keep |= component
        ys, xs = np.nonzero(component)
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        boxes.append(Box(x0, y0, x1, y1, area=(x1 - x0 + 1) * (y1 - y0 + 1)))
    return Detection(score=float("nan"), mask=keep, boxes=boxes)


def _reconstruct_instance(ckpt: Checkpoint, x: torch.Tensor) -> torch.Tensor:
    z, _ = encode(ckpt.encoder, x, "instance")
    return decode(ckpt.decoder, z, "instance")


def normal_saliency_pool(ckpt: Checkpoint, normal_images: torch.Tensor, batch_size: int = 16) -> np.ndarray:
    """Pooled saliency samples of normal images, for quantile thresholds."""
    if ckpt.error_map is None:
        raise ValueError("checkpoint has no error map")
    pool = []
    with torch.no_grad():
        for start in range(0, normal_images.shape[0], batch_size):
            x = normal_images[start : start + batch_size]
            x_hat = _reconstruct_instance(ckpt, x)
            m = x - x_hat - ckpt.error_map.unsqueeze(0)
            pool.append(np.abs(m.numpy()).mean(axis=1).ravel())
    return np.concatenate(pool)


def score_dataset(
    ckpt: Checkpoint,
    images: torch.Tensor,
    variant: str = "encoded",
    *,
    image_ids: list[str] | None = None,
    threshold_policy=None,
    min_area: int = 20,
    batch_size: int = 1,
) -> list[ImageResult]:
    """Run the full test pipeline over a stack of images.

    Each image is reconstructed on the instance-normalization path, scored,
    and (when a threshold policy is given) localized via its difference map.
    ``batch_size`` only groups the arithmetic; results match the
    image-at-a-time path to within float accumulation noise.
    """
    if ckpt.error_map is None:
        raise ValueError("checkpoint has no error map; run compute_error_map first")
    n = images.shape[0]
    ids = image_ids if image_ids is not None else [str(i) for i in range(n)]
    if len(ids) != n:
        raise ValueError(f"{len(ids)} ids for {n} images")
    tau = None
    if threshold_policy is not None:
        tau = threshold_policy.resolve() if isinstance(threshold_policy, QuantileThreshold) else float(threshold_policy)

    results: list[ImageResult] = []
    with torch.no_grad():
        for start in range(0, n, batch_size):
            x = images[start : start + batch_size]
            x_hat = _reconstruct_instance(ckpt, x)
            scores = per_image_scores(x, x_hat, ckpt.encoder, variant)
            for j in range(x.shape[0]):
                detection = None
                if tau is not None:
                    m = difference_map(x[j], x_hat[j], ckpt.error_map)
                    detection = localize(m, tau, min_area=min_area)
                    detection.score = float(scores[j])
                results.append(ImageResult(ids[start + j], float(scores[j]), detection))
    return results


def min_max_scale(scores) -> np.ndarray:
    """Affine rescale to [0, 1]; a constant list maps to all zeros."""
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.size == 0:
        return scores
    lo, hi = scores.min(), scores.max()
    if hi == lo:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)
