"""Encoder, decoder, and discriminator networks for 128x128 track images.

A network here is plain data: an ordered tuple of :class:`LayerSpec` plus one
parameter dict per layer, wrapped in :class:`NetworkSpec`. Forward passes are
explicit ``torch.nn.functional`` calls driven by the specs. Keeping the
parameters as named tensors (instead of hiding them in ``nn.Module`` state)
makes every tensor addressable for the checkpoint container and gives exact
control over the normalization modes:

* ``"train"``    -- normalize with mini-batch statistics and update the
                    running averages in place;
* ``"eval"``     -- normalize with the frozen running averages, except that a
                    batch of size 1 falls back to instance statistics;
* ``"instance"`` -- per-sample spatial statistics for every sample, i.e. the
                    single-image path vectorized over a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import torch
import torch.nn.functional as F

IMAGE_SIZE = 128
IMAGE_CHANNELS = 3
LATENT_DIM = 512
LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

#: (channels, height, width) of the four leaky-rectified encoder stages.
FEATURE_SHAPES = ((32, 62, 62), (64, 29, 29), (128, 14, 14), (256, 5, 5))

Mode = Literal["train", "eval", "instance"]
_MODES = ("train", "eval", "instance")

_KINDS = ("conv", "transposed_conv", "flatten_projection")
_ACTIVATIONS = ("leaky_relu", "relu", "tanh", "sigmoid", "none")


class ShapeError(ValueError):
    """Raised when a tensor does not have the shape an operation expects."""


@dataclass(frozen=True)
class LayerSpec:
    """One convolutional stage: geometry, normalization, and activation."""

    kind: str
    kernel: int
    stride: int
    padding: int
    filters: int
    batch_norm: bool
    activation: str
    output_padding: int = 0
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kernel not in (4, 5):
            raise ValueError(f"kernel must be 4 or 5, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.padding not in (0, 1):
            raise ValueError(f"padding must be 0 or 1, got {self.padding}")
        if self.output_padding and self.kind != "transposed_conv":
            raise ValueError("output_padding only applies to transposed convolutions")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class NetworkSpec:
    """Layer table plus the parameter tensors keyed per layer.

    ``params[i]`` holds ``weight``/``bias`` for layer ``i`` and, when the
    layer is batch-normalized, ``gamma``/``beta``/``running_mean``/
    ``running_var``.
    """

    name: str
    in_channels: int
    layers: tuple[LayerSpec, ...]
    params: list[dict[str, torch.Tensor]] = field(repr=False)


def encoder_layer_table() -> tuple[LayerSpec, ...]:
    """Four strided convolutions, then a valid 5x5 projection to 512 units."""
    return (
        LayerSpec("conv", 5, 2, 0, 32, True, "leaky_relu"),
        LayerSpec("conv", 5, 2, 0, 64, True, "leaky_relu"),
        LayerSpec("conv", 4, 2, 1, 128, True, "leaky_relu"),
        LayerSpec("conv", 5, 2, 0, 256, True, "leaky_relu"),
        LayerSpec("flatten_projection", 5, 1, 0, LATENT_DIM, False, "none"),
    )


def decoder_layer_table(final_batch_norm: bool = True) -> tuple[LayerSpec, ...]:
    """Five transposed convolutions from the 512-d code back to an image.

    All stride-2 stages need output_padding=1: with output size
    (in - 1) * stride - 2 * padding + kernel + output_padding, the chain
    5 -> 14 -> 29 -> 62 -> 128 is reachable only with output_padding = 1.
    """
    return (
        LayerSpec("transposed_conv", 5, 1, 0, 256, True, "relu"),
        LayerSpec("transposed_conv", 5, 2, 0, 128, True, "relu", output_padding=1),
        LayerSpec("transposed_conv", 4, 2, 1, 64, True, "relu", output_padding=1),
        LayerSpec("transposed_conv", 5, 2, 0, 32, True, "relu", output_padding=1),
        LayerSpec("transposed_conv", 5, 2, 0, IMAGE_CHANNELS, final_batch_norm, "tanh", output_padding=1),
    )


def discriminator_layer_table(dropout_rate: float = 0.3) -> tuple[LayerSpec, ...]:
    """Encoder replica: no batch norm but dropout on stages 3-4, sigmoid head."""
    return (
        LayerSpec("conv", 5, 2, 0, 32, True, "leaky_relu"),
        LayerSpec("conv", 5, 2, 0, 64, True, "leaky_relu"),
        LayerSpec("conv", 4, 2, 1, 128, False, "leaky_relu", dropout_rate=dropout_rate),
        LayerSpec("conv", 5, 2, 0, 256, False, "leaky_relu", dropout_rate=dropout_rate),
        LayerSpec("flatten_projection", 5, 1, 0, 1, False, "sigmoid"),
    )


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed).spawn(3)[index].generate_state(1, np.uint64)[0])


def _init_network(
    name: str,
    in_channels: int,
    layers: tuple[LayerSpec, ...],
    seed: int,
    dtype: torch.dtype,
) -> NetworkSpec:
    gen = torch.Generator().manual_seed(seed)
    params: list[dict[str, torch.Tensor]] = []
    c_in = in_channels
    for spec in layers:
        if spec.kind == "transposed_conv":
            shape = (c_in, spec.filters, spec.kernel, spec.kernel)
        else:
            shape = (spec.filters, c_in, spec.kernel, spec.kernel)
        # Xavier-uniform bound; symmetric in fan-in/fan-out.
        bound = float(np.sqrt(6.0 / ((c_in + spec.filters) * spec.kernel * spec.kernel)))
        weight = torch.empty(shape, dtype=dtype).uniform_(-bound, bound, generator=gen)
        weight.requires_grad_(True)
        bias = torch.zeros(spec.filters, dtype=dtype, requires_grad=True)
        layer = {"weight": weight, "bias": bias}
        if spec.batch_norm:
            layer["gamma"] = torch.ones(spec.filters, dtype=dtype, requires_grad=True)
            layer["beta"] = torch.zeros(spec.filters, dtype=dtype, requires_grad=True)
            layer["running_mean"] = torch.zeros(spec.filters, dtype=dtype)
            layer["running_var"] = torch.ones(spec.filters, dtype=dtype)
        params.append(layer)
        c_in = spec.filters
    return NetworkSpec(name=name, in_channels=in_channels, layers=layers, params=params)


def build_networks(
    seed: int,
    *,
    dropout_rate: float = 0.3,
    final_decoder_batch_norm: bool = True,
    discriminator_seed: int | None = None,
    dtype: torch.dtype = torch.float32,
) -> tuple[NetworkSpec, NetworkSpec, NetworkSpec]:
    """Build the (encoder, decoder, discriminator) triple, Xavier-initialized.

    Deterministic for a fixed seed; each network draws from its own derived
    seed so ``discriminator_seed`` can reinitialize the discriminator without
    disturbing the autoencoder.
    """
    disc_seed = _child_seed(seed, 2) if discriminator_seed is None else _child_seed(discriminator_seed, 2)
    encoder = _init_network("encoder", IMAGE_CHANNELS, encoder_layer_table(), _child_seed(seed, 0), dtype)
    decoder = _init_network("decoder", LATENT_DIM, decoder_layer_table(final_decoder_batch_norm), _child_seed(seed, 1), dtype)
    discriminator = _init_network(
        "discriminator", IMAGE_CHANNELS, discriminator_layer_table(dropout_rate), disc_seed, dtype
    )
    return encoder, decoder, discriminator


def _check_mode(mode: str) -> None:
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def _batch_norm(h: torch.Tensor, layer: dict[str, torch.Tensor], mode: str) -> torch.Tensor:
    gamma = layer["gamma"].view(1, -1, 1, 1)
    beta = layer["beta"].view(1, -1, 1, 1)
    if mode == "train":
        var, mean = torch.var_mean(h, dim=(0, 2, 3), correction=0)
        with torch.no_grad():
            n = h.numel() / h.shape[1]
            unbiased = var.detach() * (n / (n - 1)) if n > 1 else var.detach()
            layer["running_mean"].mul_(1.0 - BN_MOMENTUM).add_(BN_MOMENTUM * mean.detach())
            layer["running_var"].mul_(1.0 - BN_MOMENTUM).add_(BN_MOMENTUM * unbiased)
        mean = mean.view(1, -1, 1, 1)
        var = var.view(1, -1, 1, 1)
    elif mode == "instance" or h.shape[0] == 1:
        # Single-image path: the sample's own spatial statistics.
        var, mean = torch.var_mean(h, dim=(2, 3), keepdim=True, correction=0)
    else:
        mean = layer["running_mean"].view(1, -1, 1, 1)
        var = layer["running_var"].view(1, -1, 1, 1)
    return (h - mean) / torch.sqrt(var + BN_EPS) * gamma + beta


def _apply_layer(spec: LayerSpec, layer: dict[str, torch.Tensor], h: torch.Tensor, mode: str) -> torch.Tensor:
    if spec.kind == "transposed_conv":
        h = F.conv_transpose2d(
            h, layer["weight"], layer["bias"],
            stride=spec.stride, padding=spec.padding, output_padding=spec.output_padding,
        )
    else:
        h = F.conv2d(h, layer["weight"], layer["bias"], stride=spec.stride, padding=spec.padding)
    if spec.batch_norm:
        h = _batch_norm(h, layer, mode)
    if spec.activation == "leaky_relu":
        h = F.leaky_relu(h, LEAKY_SLOPE)
    elif spec.activation == "relu":
        h = F.relu(h)
    elif spec.activation == "tanh":
        h = torch.tanh(h)
    elif spec.activation == "sigmoid":
        h = torch.sigmoid(h)
    if spec.dropout_rate > 0.0:
        h = F.dropout(h, spec.dropout_rate, training=(mode == "train"))
    return h


def _forward(net: NetworkSpec, x: torch.Tensor, mode: str, collect_all: bool = False):
    _check_mode(mode)
    outputs = []
    features = []
    h = x
    for spec, layer in zip(net.layers, net.params):
        h = _apply_layer(spec, layer, h, mode)
        if collect_all:
            outputs.append(h)
        if spec.activation == "leaky_relu":
            features.append(h)
    return h, features, outputs


def _check_image_batch(x: torch.Tensor, who: str) -> None:
    expected = ("N", IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
    if x.dim() != 4 or x.shape[1:] != (IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE):
        raise ShapeError(f"{who} expects image batch {expected}, got {tuple(x.shape)}")


def encode(encoder: NetworkSpec, x: torch.Tensor, mode: Mode = "eval") -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Project an image batch to latent codes, returning the feature stack.

    Returns ``(z, features)`` where ``z`` is (N, 512) and ``features`` holds
    the four leaky-rectified stage outputs (shapes in ``FEATURE_SHAPES``).
    """
    _check_image_batch(x, "encode")
    h, features, _ = _forward(encoder, x, mode)
    return h.reshape(h.shape[0], LATENT_DIM), features


def decode(decoder: NetworkSpec, z: torch.Tensor, mode: Mode = "eval") -> torch.Tensor:
    """Reconstruct a (N, 3, 128, 128) image batch from latent codes."""
    if z.dim() != 2 or z.shape[1] != LATENT_DIM:
        raise ShapeError(f"decode expects latent codes (N, {LATENT_DIM}), got {tuple(z.shape)}")
    h, _, _ = _forward(decoder, z.reshape(z.shape[0], LATENT_DIM, 1, 1), mode)
    return h


def discriminate(discriminator: NetworkSpec, x: torch.Tensor, mode: Mode = "eval") -> torch.Tensor:
    """Per-image authenticity probabilities in (0, 1), shape (N,)."""
    _check_image_batch(x, "discriminate")
    h, _, _ = _forward(discriminator, x, mode)
    return h.reshape(h.shape[0])


def reconstruct(
    encoder: NetworkSpec, decoder: NetworkSpec, x: torch.Tensor, mode: Mode = "eval"
) -> tuple[torch.Tensor, torch.Tensor, list[torch.Tensor]]:
    """Encode then decode; returns ``(x_hat, z, features_of_x)``."""
    z, features = encode(encoder, x, mode)
    return decode(decoder, z, mode), z, features


def layer_output_shapes(net: NetworkSpec, x: torch.Tensor, mode: Mode = "eval") -> list[tuple[int, ...]]:
    """Shapes of every layer output on a probe batch, in layer order."""
    _, _, outputs = _forward(net, x, mode, collect_all=True)
    return [tuple(t.shape) for t in outputs]


def validate_feature_stack(features: list[torch.Tensor]) -> None:
    """Check the four-stage feature stack invariant, raising ShapeError."""
    if len(features) != len(FEATURE_SHAPES):
        raise ShapeError(f"feature stack must have {len(FEATURE_SHAPES)} stages, got {len(features)}")
    for i, (t, shape) in enumerate(zip(features, FEATURE_SHAPES)):
        if tuple(t.shape[1:]) != shape:
            raise ShapeError(f"feature stage {i} has shape {tuple(t.shape[1:])}, expected {shape}")


def network_parameters(net: NetworkSpec, trainable_only: bool = True) -> list[torch.Tensor]:
    """Flat list of a network's tensors, optionally only the trainable ones."""
    out = []
    for layer in net.params:
        for key, t in layer.items():
            if trainable_only and key in ("running_mean", "running_var"):
                continue
            out.append(t)
    return out


def to_dtype(net: NetworkSpec, dtype: torch.dtype) -> NetworkSpec:
    """Copy of the network with every tensor cast to ``dtype``."""
    params = []
    for layer in net.params:
        cast = {}
        for key, t in layer.items():
            c = t.detach().to(dtype)
            c.requires_grad_(t.requires_grad)
            cast[key] = c
        params.append(cast)
    return NetworkSpec(net.name, net.in_channels, net.layers, params)
