"""Loading dataset images and masks into model-ready tensors.

8-bit pixels map linearly to [-1, 1]; images that are not already 128x128
are resized with bilinear interpolation first.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .datagen import Manifest, ManifestRow
from .model import IMAGE_SIZE


def load_image(path: str | Path) -> np.ndarray:
    """One image file as float32 (3, 128, 128) in [-1, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (IMAGE_SIZE, IMAGE_SIZE):
            im = im.resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32)
    return (arr / 127.5 - 1.0).transpose(2, 0, 1)


def load_images(manifest: Manifest, rows: list[ManifestRow]) -> torch.Tensor:
    """Stack the listed rows into a (N, 3, 128, 128) float tensor."""
    if not rows:
        return torch.empty(0, 3, IMAGE_SIZE, IMAGE_SIZE)
    stack = np.stack([load_image(manifest.root / r.path) for r in rows])
    return torch.from_numpy(stack)


def load_mask(manifest: Manifest, row: ManifestRow) -> np.ndarray:
    """Ground-truth boolean mask (128, 128) for an abnormal row."""
    if row.mask_path is None:
        raise ValueError(f"row {row.path} has no mask")
    with Image.open(manifest.root / row.mask_path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127
