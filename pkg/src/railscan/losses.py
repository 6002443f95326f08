"""Training losses as pure differentiable functions of torch tensors.

The generator objective sums a per-pixel mean-absolute term and a perceptual
term (per-stage Euclidean distance between encoder feature stacks); a latent
term and an adversarial term exist behind config flags for ablations.
All functions take and return torch tensors so gradients flow through them;
terms accumulate in the order perceptual, pixel, latent, adversarial.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .model import ShapeError


@dataclass(frozen=True)
class LossConfig:
    use_pixel: bool = True
    use_perceptual: bool = True
    use_latent: bool = False
    use_adversarial_generator_term: bool = False
    epsilon_log: float = 1e-7

    def __post_init__(self) -> None:
        if not (self.use_pixel or self.use_perceptual or self.use_latent or self.use_adversarial_generator_term):
            raise ValueError("at least one generator loss term must be enabled")
        if not 0.0 < self.epsilon_log < 0.5:
            raise ValueError(f"epsilon_log must be in (0, 0.5), got {self.epsilon_log}")


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, who: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{who}: shapes differ, {tuple(a.shape)} vs {tuple(b.shape)}")


def pixel_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over every element."""
    _check_same_shape(x, x_hat, "pixel_loss")
    return (x - x_hat).abs().mean()


def perceptual_loss(features_x: list[torch.Tensor], features_x_hat: list[torch.Tensor]) -> torch.Tensor:
    """Sum over stages of the batch-mean Euclidean feature distance.

    Each stage contributes the mean over the batch of the L2 norm of the
    flattened per-sample feature difference.
    """
    if len(features_x) != len(features_x_hat):
        raise ShapeError(
            f"perceptual_loss: stack lengths differ, {len(features_x)} vs {len(features_x_hat)}"
        )
    total = None
    for fx, fxh in zip(features_x, features_x_hat):
        _check_same_shape(fx, fxh, "perceptual_loss")
        term = (fx - fxh).flatten(1).pow(2).sum(dim=1).sqrt().mean()
        total = term if total is None else total + term
    if total is None:
        raise ShapeError("perceptual_loss: empty feature stacks")
    return total


def latent_loss(z: torch.Tensor, z_hat: torch.Tensor) -> torch.Tensor:
    """Batch-mean Euclidean distance between bottleneck codes."""
    _check_same_shape(z, z_hat, "latent_loss")
    return (z - z_hat).pow(2).sum(dim=1).sqrt().mean()


def adversarial_generator_loss(d_fake: torch.Tensor, epsilon_log: float = 1e-7) -> torch.Tensor:
    """-mean(log D(x_hat)), with probabilities clamped away from 0 and 1."""
    return -torch.log(d_fake.clamp(epsilon_log, 1.0 - epsilon_log)).mean()


def generator_loss(
    x: torch.Tensor,
    x_hat: torch.Tensor,
    features_x: list[torch.Tensor],
    features_x_hat: list[torch.Tensor],
    cfg: LossConfig,
    *,
    z: torch.Tensor | None = None,
    z_hat: torch.Tensor | None = None,
    d_fake: torch.Tensor | None = None,
) -> torch.Tensor:
    """Sum of the enabled generator terms (unit weights)."""
    total = None
    if cfg.use_perceptual:
        total = perceptual_loss(features_x, features_x_hat)
    if cfg.use_pixel:
        term = pixel_loss(x, x_hat)
        total = term if total is None else total + term
    if cfg.use_latent:
        if z is None or z_hat is None:
            raise ValueError("use_latent requires z and z_hat")
        term = latent_loss(z, z_hat)
        total = term if total is None else total + term
    if cfg.use_adversarial_generator_term:
        if d_fake is None:
            raise ValueError("use_adversarial_generator_term requires d_fake")
        term = adversarial_generator_loss(d_fake, cfg.epsilon_log)
        total = term if total is None else total + term
    return total


def discriminator_loss(
    d_real: torch.Tensor, d_fake: torch.Tensor, epsilon_log: float = 1e-7
) -> torch.Tensor:
    """Cross-entropy form -mean(log d_real) - mean(log(1 - d_fake)).

    Inputs are clamped to [epsilon_log, 1 - epsilon_log] so exact 0/1
    probabilities stay finite.
    """
    d_real = d_real.clamp(epsilon_log, 1.0 - epsilon_log)
    d_fake = d_fake.clamp(epsilon_log, 1.0 - epsilon_log)
    return -torch.log(d_real).mean() - torch.log(1.0 - d_fake).mean()
