"""Procedural generator of rail-track-style images and composited anomalies.

Scenes are 128x128 RGB renders of two steel rails over textured ballast with
periodic sleepers and fasteners; anomalies are single high-contrast parametric
patches (rectangle, ellipse, polygon, or textured patch) with exact
ground-truth masks. Everything is driven by numpy Generators, so a (params,
seed) pair reproduces files byte for byte.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

SIZE = 128
_PIXELS = SIZE * SIZE


@dataclass(frozen=True)
class SceneParams:
    rail_count: int = 2
    rail_width: tuple[int, int] = (6, 9)
    rail_spacing: tuple[int, int] = (52, 72)
    sleeper_period: tuple[int, int] = (26, 40)
    ballast_noise: float = 0.04
    fastener_density: float = 0.9
    illumination_jitter: float = 0.06

    def __post_init__(self) -> None:
        for name in ("rail_width", "rail_spacing", "sleeper_period"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} range must be nonempty and positive, got ({lo}, {hi})")
        if not 0.0 <= self.fastener_density <= 1.0:
            raise ValueError(f"fastener_density must be in [0, 1], got {self.fastener_density}")


@dataclass(frozen=True)
class AnomalySpec:
    """Single-object spec; the offset range is signed, so (0.45, 0.95)
    brightens the patch and (-0.95, -0.45) darkens it."""

    shapes: tuple[str, ...] = ("rectangle", "ellipse", "polygon", "texture")
    area_fraction: tuple[float, float] = (0.02, 0.15)
    contrast_offset: tuple[float, float] = (0.45, 0.95)
    position: str = "uniform"  # or "near_rails"

    def __post_init__(self) -> None:
        lo, hi = self.area_fraction
        if not (0.0 < lo <= hi < 1.0):
            raise ValueError(f"area_fraction range must sit inside (0, 1), got ({lo}, {hi})")
        lo, hi = self.contrast_offset
        if not (-2.0 <= lo <= hi <= 2.0):
            raise ValueError(f"contrast_offset range must be ordered within [-2, 2], got ({lo}, {hi})")
        if self.position not in ("uniform", "near_rails"):
            raise ValueError(f"position must be 'uniform' or 'near_rails', got {self.position!r}")
        unknown = set(self.shapes) - {"rectangle", "ellipse", "polygon", "texture"}
        if unknown or not self.shapes:
            raise ValueError(f"unknown anomaly shapes: {sorted(unknown)}")


def _value_noise(rng: np.random.Generator, cells: int) -> np.ndarray:
    """Coarse value-noise field in [-1, 1]: low-res grid, bilinear upsample."""
    grid = rng.uniform(-1.0, 1.0, (cells, cells))
    xs = np.linspace(0, cells - 1, SIZE)
    x0 = np.clip(xs.astype(int), 0, cells - 2)
    f = xs - x0
    rows = grid[:, x0] * (1 - f) + grid[:, x0 + 1] * f
    return rows[x0, :] * (1 - f)[:, None] + rows[x0 + 1, :] * f[:, None]


def generate_normal(params: SceneParams, seed: int) -> np.ndarray:
    """Render one normal scene as float32 (3, 128, 128) in [-1, 1]."""
    rng = np.random.default_rng(seed)
    yy = np.arange(SIZE)

    # ballast bed: warm gray base, coarse blobs plus fine grain
    base = np.array([0.46, 0.43, 0.39]) + rng.uniform(-0.02, 0.02, 3)
    coarse = _value_noise(rng, 17)
    fine = rng.uniform(-1.0, 1.0, (SIZE, SIZE))
    texture = 0.8 * coarse + 0.2 * fine
    img = base[None, None, :] * (1.0 + params.ballast_noise * 3.0 * texture)[:, :, None]

    # sleepers: periodic dark horizontal bands under the rails
    period = int(rng.integers(params.sleeper_period[0], params.sleeper_period[1] + 1))
    phase = int(rng.integers(0, period))
    band = max(3, int(round(0.38 * period)))
    sleeper = np.array([0.33, 0.28, 0.24]) + rng.uniform(-0.02, 0.02, 3)
    wood_grain = rng.uniform(-1.0, 1.0, (SIZE, SIZE))
    sleeper_rows = ((yy + phase) % period) < band
    img[sleeper_rows] = sleeper[None, None, :] * (
        1.0 + 0.10 * wood_grain[sleeper_rows][:, :, None]
    )
    sleeper_centers = [
        y for y in range(SIZE) if sleeper_rows[y] and (y == 0 or not sleeper_rows[y - 1])
    ]

    # rails: vertical steel bands with a bright running surface and dark flanks
    spacing = int(rng.integers(params.rail_spacing[0], params.rail_spacing[1] + 1))
    width = int(rng.integers(params.rail_width[0], params.rail_width[1] + 1))
    center = SIZE / 2 + rng.integers(-5, 6)
    offsets = (np.arange(params.rail_count) - (params.rail_count - 1) / 2) * spacing
    sheen = 1.0 + 0.05 * _value_noise(rng, 9)[:, 0]
    rail_centers = []
    for off in offsets:
        cx = int(round(center + off))
        x0 = max(0, cx - width // 2)
        x1 = min(SIZE, x0 + width)
        if x1 <= x0:
            continue
        rail_centers.append(cx)
        img[:, x0:x1] = np.array([0.60, 0.61, 0.63])[None, None, :] * sheen[:, None, None]
        head0 = x0 + max(1, width // 3)
        head1 = min(x1, head0 + max(1, width // 3))
        img[:, head0:head1] = np.array([0.86, 0.87, 0.88])[None, None, :] * sheen[:, None, None]
        if x0 >= 1:
            img[:, x0 - 1] *= 0.45
        if x1 < SIZE:
            img[:, x1] *= 0.45

    # fasteners: small bright clips beside each rail at sleeper crossings
    clip_color = np.array([0.70, 0.63, 0.52])
    for y0 in sleeper_centers:
        for cx in rail_centers:
            if rng.uniform() > params.fastener_density:
                continue
            cy = min(SIZE - 4, y0 + band // 2)
            for side in (-1, 1):
                fx = cx + side * (width // 2 + 2)
                if 1 <= fx < SIZE - 3:
                    img[cy : cy + 3, fx : fx + 3] = clip_color * rng.uniform(0.92, 1.08)

    # global illumination: scale plus a gentle vertical gradient
    gain = 1.0 + rng.uniform(-params.illumination_jitter, params.illumination_jitter)
    slope = rng.uniform(-0.06, 0.06)
    gradient = 1.0 + slope * (yy / (SIZE - 1) - 0.5)
    img = img * gain * gradient[:, None, None]

    img = np.clip(img, 0.0, 1.0)
    return (img.transpose(2, 0, 1) * 2.0 - 1.0).astype(np.float32)


def _polygon_mask(vertices: np.ndarray) -> np.ndarray:
    canvas = Image.new("L", (SIZE, SIZE), 0)
    ImageDraw.Draw(canvas).polygon([(float(x), float(y)) for x, y in vertices], fill=1)
    return np.asarray(canvas, dtype=bool)


def _shape_mask(kind: str, target_px: float, cx: float, cy: float, rng: np.random.Generator) -> np.ndarray:
    """Rasterize one shape of roughly ``target_px`` area centered near (cx, cy)."""
    if kind in ("rectangle", "texture"):
        aspect = float(np.exp(rng.uniform(-0.9, 0.9)))
        w = max(3, int(round(np.sqrt(target_px * aspect))))
        h = max(3, int(round(target_px / w)))
        w, h = min(w, SIZE - 2), min(h, SIZE - 2)
        x0 = int(np.clip(round(cx - w / 2), 1, SIZE - 1 - w))
        y0 = int(np.clip(round(cy - h / 2), 1, SIZE - 1 - h))
        mask = np.zeros((SIZE, SIZE), dtype=bool)
        mask[y0 : y0 + h, x0 : x0 + w] = True
        return mask
    if kind == "ellipse":
        aspect = float(np.exp(rng.uniform(-0.7, 0.7)))
        a = np.sqrt(target_px * aspect / np.pi)
        b = target_px / (np.pi * a)
        a, b = min(a, SIZE / 2 - 2), min(b, SIZE / 2 - 2)
        cx = float(np.clip(cx, a + 1, SIZE - 2 - a))
        cy = float(np.clip(cy, b + 1, SIZE - 2 - b))
        ys, xs = np.mgrid[0:SIZE, 0:SIZE]
        return ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0
    # polygon: star-shaped vertex fan, scaled to the target area
    k = int(rng.integers(5, 9))
    angles = np.sort(rng.uniform(0, 2 * np.pi, k))
    radii = rng.uniform(0.55, 1.0, k)
    vx, vy = radii * np.cos(angles), radii * np.sin(angles)
    shoelace = 0.5 * abs(np.sum(vx * np.roll(vy, -1) - np.roll(vx, -1) * vy))
    scale = np.sqrt(target_px / max(shoelace, 1e-9))
    r_max = scale * radii.max()
    if r_max > SIZE / 2 - 2:
        scale *= (SIZE / 2 - 2) / r_max
        r_max = SIZE / 2 - 2
    cx = float(np.clip(cx, r_max + 1, SIZE - 2 - r_max))
    cy = float(np.clip(cy, r_max + 1, SIZE - 2 - r_max))
    return _polygon_mask(np.c_[cx + scale * vx, cy + scale * vy])


def composite_anomaly(
    image: np.ndarray, spec: AnomalySpec, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw exactly one object onto a scene; returns (image', boolean mask).

    The mask area over 128^2 lands inside ``spec.area_fraction``; pixels
    outside the mask are untouched. A zero contrast range leaves the image
    unchanged (degenerate, warned) but still records the mask.
    """
    rng = np.random.default_rng(seed)
    kind = str(rng.choice(list(spec.shapes)))
    lo, hi = spec.area_fraction
    margin = 0.08 * (hi - lo)
    target = rng.uniform(lo + margin, hi - margin) if hi > lo else lo
    target_px = target * _PIXELS

    if spec.position == "near_rails":
        cx = float(np.clip(rng.normal(SIZE / 2, SIZE / 6), 4, SIZE - 5))
    else:
        cx = rng.uniform(4, SIZE - 5)
    cy = rng.uniform(4, SIZE - 5)

    mask = _shape_mask(kind, target_px, cx, cy, rng)
    for _ in range(5):  # corrective rescale against rasterization error
        frac = mask.sum() / _PIXELS
        if lo <= frac <= hi:
            break
        target_px *= np.clip(target / frac, 0.5, 2.0)
        mask = _shape_mask(kind, target_px, cx, cy, rng)
    frac = mask.sum() / _PIXELS
    if not lo <= frac <= hi:
        raise RuntimeError(f"could not fit anomaly area {frac:.4f} into [{lo}, {hi}]")

    offset_base = rng.uniform(*spec.contrast_offset)
    offset = offset_base * (1.0 + rng.uniform(-0.15, 0.15, 3))
    out = np.array(image, dtype=np.float32, copy=True)
    patch = out[:, mask] + offset[:, None].astype(np.float32)
    sigma = 0.22 * abs(offset_base)
    if kind == "texture" and sigma > 0.0:
        patch = patch + rng.normal(0.0, sigma, patch.shape).astype(np.float32)
    out[:, mask] = np.clip(patch, -1.0, 1.0)
    if offset_base == 0.0:
        warnings.warn("zero-contrast anomaly: image left unchanged", RuntimeWarning)
    return out, mask


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: str  # "normal" | "abnormal"
    mask_path: str | None
    seed: int


@dataclass
class Manifest:
    root: Path
    rows: list[ManifestRow]

    @property
    def train_rows(self) -> list[ManifestRow]:
        return [r for r in self.rows if r.path.startswith("images/train/")]

    @property
    def test_rows(self) -> list[ManifestRow]:
        return [r for r in self.rows if r.path.startswith("images/test/")]


MANIFEST_HEADER = ("path", "label", "mask_path", "seed")


def write_manifest(root: Path, rows: list[ManifestRow]) -> Path:
    path = root / "manifest.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(MANIFEST_HEADER)
        for r in rows:
            w.writerow([r.path, r.label, r.mask_path or "", r.seed])
    return path


def read_manifest(root: str | Path, check_files: bool = True) -> Manifest:
    """Load and validate manifest.csv under a dataset directory."""
    root = Path(root)
    path = root / "manifest.csv"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.csv under {root}")
    rows: list[ManifestRow] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader, ()))
        if header != MANIFEST_HEADER:
            raise ValueError(f"manifest header {header} != {MANIFEST_HEADER}")
        for raw in reader:
            p, label, mask_path, seed = raw
            if label not in ("normal", "abnormal"):
                raise ValueError(f"manifest label {label!r} for {p}")
            if (label == "abnormal") != bool(mask_path):
                raise ValueError(f"label/mask mismatch for {p}: {label!r} with mask {mask_path!r}")
            rows.append(ManifestRow(p, label, mask_path or None, int(seed)))
    if check_files:
        for r in rows:
            for rel in (r.path, r.mask_path):
                if rel and not (root / rel).exists():
                    raise FileNotFoundError(f"manifest lists missing file {rel}")
    return Manifest(root=root, rows=rows)


def save_image_png(path: Path, chw: np.ndarray) -> None:
    u8 = np.clip(np.round((chw.transpose(1, 2, 0) + 1.0) * 127.5), 0, 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(u8, mode="RGB").save(path)


def save_mask_png(path: Path, mask: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def build_dataset(
    train_normal: int,
    test_normal: int,
    test_abnormal: int,
    params: SceneParams,
    anomaly: AnomalySpec,
    out_dir: str | Path,
    seed: int,
) -> Manifest:
    """Write a dataset directory (images/, masks/, manifest.csv).

    Train rows are all normal; abnormal test rows carry ground-truth masks.
    The split is encoded in the path prefix (images/train/ vs images/test/).
    """
    for name, count in (("train_normal", train_normal), ("test_normal", test_normal),
                        ("test_abnormal", test_abnormal)):
        if count < 0:
            raise ValueError(f"{name} must be >= 0, got {count}")
    if train_normal == 0:
        raise ValueError("train_normal must be >= 1")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(seed).spawn(train_normal + test_normal + 2 * test_abnormal)
    seeds = [int(c.generate_state(1, np.uint64)[0]) for c in children]
    it = iter(seeds)

    rows: list[ManifestRow] = []
    for i in range(train_normal):
        s = next(it)
        rel = f"images/train/normal_{i:05d}.png"
        save_image_png(root / rel, generate_normal(params, s))
        rows.append(ManifestRow(rel, "normal", None, s))
    for i in range(test_normal):
        s = next(it)
        rel = f"images/test/normal_{i:05d}.png"
        save_image_png(root / rel, generate_normal(params, s))
        rows.append(ManifestRow(rel, "normal", None, s))
    for i in range(test_abnormal):
        s, s_anom = next(it), next(it)
        rel = f"images/test/abnormal_{i:05d}.png"
        mask_rel = f"masks/test/abnormal_{i:05d}.png"
        scene = generate_normal(params, s)
        image, mask = composite_anomaly(scene, anomaly, s_anom)
        save_image_png(root / rel, image)
        save_mask_png(root / mask_rel, mask)
        rows.append(ManifestRow(rel, "abnormal", mask_rel, s))

    write_manifest(root, rows)
    return Manifest(root=root, rows=rows)
