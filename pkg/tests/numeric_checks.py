"""Shared numerical helpers: central finite differences and comparisons."""

import numpy as np
import torch


def central_difference_grad(fn, x: torch.Tensor, h: float = 1e-3) -> torch.Tensor:
    """Elementwise central finite-difference gradient of a scalar function."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        up = float(fn(x))
        flat[i] = orig - h
        down = float(fn(x))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def analytic_grad(fn, x: torch.Tensor) -> torch.Tensor:
    xg = x.clone().requires_grad_(True)
    value = fn(xg)
    value.backward()
    return xg.grad.detach()


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(float(a.abs().max()), float(b.abs().max()), 1e-12)
    return float((a - b).abs().max()) / denom


def max_relative_difference(a, b, floor: float = 1e-9) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))
