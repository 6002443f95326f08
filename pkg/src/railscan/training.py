"""Alternating adversarial training of the autoencoder and discriminator.

Per mini-batch: ``k_d`` discriminator steps on the cross-entropy loss, then
``k_ae`` autoencoder steps on the generator loss. Mini-batches are drawn
without replacement and reshuffled each epoch from the run seed, so a fixed
config reproduces the same checkpoint bit for bit.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, save_checkpoint
from .losses import LossConfig, discriminator_loss, generator_loss
from .model import (
    IMAGE_CHANNELS,
    IMAGE_SIZE,
    NetworkSpec,
    ShapeError,
    build_networks,
    decode,
    discriminate,
    encode,
    network_parameters,
)


class TrainingDiverged(RuntimeError):
    """A loss became non-finite; message names the epoch and step."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 24
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    weight_decay: float = 1e-2
    k_d: int = 1
    k_ae: int = 1
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    dropout_rate: float = 0.3
    final_decoder_batch_norm: bool = True
    dataset_dir: str | None = None
    checkpoint_path: str | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.k_d < 1 or self.k_ae < 1:
            raise ValueError(f"k_d and k_ae must be >= 1, got {self.k_d}, {self.k_ae}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    loss = d.pop("loss", None)
    return TrainConfig(loss=LossConfig(**loss) if loss else LossConfig(), **d)


@dataclass
class EpochStats:
    epoch: int
    loss_d: float
    loss_eg: float
    d_real_mean: float
    d_fake_mean: float
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochStats] = field(default_factory=list)
    d_steps: int = 0
    ae_steps: int = 0


TRAIN_LOG_COLUMNS = ("epoch", "loss_d", "loss_eg", "d_real_mean", "d_fake_mean", "seconds")


def write_train_log(path: str | Path, log: TrainLog) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAIN_LOG_COLUMNS)
        for r in log.records:
            w.writerow([r.epoch, r.loss_d, r.loss_eg, r.d_real_mean, r.d_fake_mean, r.seconds])


def _as_image_tensor(images) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32) if not isinstance(images, torch.Tensor) else images
    if x.dim() != 4 or x.shape[1:] != (IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE):
        raise ShapeError(
            f"expected images (N, {IMAGE_CHANNELS}, {IMAGE_SIZE}, {IMAGE_SIZE}), got {tuple(x.shape)}"
        )
    return x.to(torch.float32)


def _check_finite(value: torch.Tensor, what: str, epoch: int, step: int) -> None:
    if not torch.isfinite(value):
        raise TrainingDiverged(f"{what} became non-finite at epoch {epoch}, step {step}")


def train(
    cfg: TrainConfig,
    normal_images,
    *,
    networks: tuple[NetworkSpec, NetworkSpec, NetworkSpec] | None = None,
    verbose: bool = False,
) -> tuple[Checkpoint, TrainLog]:
    """Run the adversarial schedule on a stack of normal images.

    ``normal_images`` is a (N, 3, 128, 128) float tensor/array in [-1, 1].
    Returns the trained checkpoint (no error map yet) and the per-epoch log;
    saves the checkpoint to ``cfg.checkpoint_path`` when that is set.
    """
    x_all = _as_image_tensor(normal_images)
    n = x_all.shape[0]
    if n == 0:
        raise ValueError("training dataset is empty")

    torch.manual_seed(cfg.seed)  # dropout draws
    if networks is None:
        encoder, decoder, discriminator = build_networks(
            cfg.seed,
            dropout_rate=cfg.dropout_rate,
            final_decoder_batch_norm=cfg.final_decoder_batch_norm,
        )
    else:
        encoder, decoder, discriminator = networks

    opt_d = torch.optim.AdamW(
        network_parameters(discriminator),
        lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay,
    )
    opt_ae = torch.optim.AdamW(
        network_parameters(encoder) + network_parameters(decoder),
        lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay,
    )

    shuffle_rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        sums = {"loss_d": 0.0, "loss_eg": 0.0, "d_real": 0.0, "d_fake": 0.0}
        n_d = n_ae = 0
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            x = x_all[order[start : start + cfg.batch_size]]

            for _ in range(cfg.k_d):
                with torch.no_grad():
                    z, _ = encode(encoder, x, "train")
                    x_hat = decode(decoder, z, "train")
                d_real = discriminate(discriminator, x, "train")
                d_fake = discriminate(discriminator, x_hat, "train")
                loss_d = discriminator_loss(d_real, d_fake, cfg.loss.epsilon_log)
                _check_finite(loss_d, "discriminator loss", epoch, step)
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                sums["loss_d"] += float(loss_d.detach())
                sums["d_real"] += float(d_real.detach().mean())
                sums["d_fake"] += float(d_fake.detach().mean())
                n_d += 1

            for _ in range(cfg.k_ae):
                z, features_x = encode(encoder, x, "train")
                x_hat = decode(decoder, z, "train")
                z_hat, features_x_hat = encode(encoder, x_hat, "train")
                d_fake_g = (
                    discriminate(discriminator, x_hat, "train")
                    if cfg.loss.use_adversarial_generator_term
                    else None
                )
                loss_eg = generator_loss(
                    x, x_hat, features_x, features_x_hat, cfg.loss,
                    z=z, z_hat=z_hat, d_fake=d_fake_g,
                )
                _check_finite(loss_eg, "generator loss", epoch, step)
                opt_ae.zero_grad()
                loss_eg.backward()
                opt_ae.step()
                sums["loss_eg"] += float(loss_eg.detach())
                n_ae += 1

        record = EpochStats(
            epoch=epoch,
            loss_d=sums["loss_d"] / n_d,
            loss_eg=sums["loss_eg"] / n_ae,
            d_real_mean=sums["d_real"] / n_d,
            d_fake_mean=sums["d_fake"] / n_d,
            seconds=time.perf_counter() - t0,
        )
        log.records.append(record)
        log.d_steps += n_d
        log.ae_steps += n_ae
        if verbose:
            print(
                f"epoch {epoch:3d}/{cfg.epochs}  loss_d={record.loss_d:.4f}  "
                f"loss_eg={record.loss_eg:.4f}  d_real={record.d_real_mean:.3f}  "
                f"d_fake={record.d_fake_mean:.3f}  {record.seconds:.1f}s"
            )

    ckpt = Checkpoint(encoder=encoder, decoder=decoder, discriminator=discriminator, config=cfg)
    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, ckpt)
    return ckpt, log


def error_map_from_residuals(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Elementwise mean |x - x_hat| over the batch: the (3, 128, 128) map."""
    x = _as_image_tensor(x)
    x_hat = _as_image_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"residual shapes differ: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return (x - x_hat).abs().mean(dim=0)


def compute_error_map(
    encoder: NetworkSpec,
    decoder: NetworkSpec,
    normal_images,
    batch_size: int = 32,
) -> torch.Tensor:
    """Average absolute reconstruction residual over the training set.

    Reconstructions use the single-image inference path (instance
    normalization), matching how test images are processed.
    """
    x_all = _as_image_tensor(normal_images)
    n = x_all.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    total = torch.zeros(IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
    with torch.no_grad():
        for start in range(0, n, batch_size):
            x = x_all[start : start + batch_size]
            z, _ = encode(encoder, x, "instance")
            x_hat = decode(decoder, z, "instance")
            total += (x - x_hat).abs().sum(dim=0)
    return total / n
