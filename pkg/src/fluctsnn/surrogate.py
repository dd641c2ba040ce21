"""SuperSpike surrogate derivative and the spike nonlinearity built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class SurrogateConfig:
    """Steepness of the surrogate; rescaled variants equal 1 at rest."""

    beta: float = 20.0
    rescaled: bool = False

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def surrogate_derivative(x, cfg: SurrogateConfig = SurrogateConfig()):
    """h(x) = 1/(beta*|x|+1)^2, optionally divided by its value at rest.

    x is the membrane potential minus threshold.  The rescaled variant divides
    by h(-theta) with theta = 1, so a neuron at rest has derivative 1.
    """
    x = np.asarray(x, dtype=float)
    h = 1.0 / (cfg.beta * np.abs(x) + 1.0) ** 2
    if cfg.rescaled:
        h = h * (cfg.beta + 1.0) ** 2
    if h.ndim == 0:
        return float(h)
    return h


def soft_spike(v: torch.Tensor, cfg: SurrogateConfig) -> torch.Tensor:
    """Differentiable stand-in for the spike step whose derivative is h.

    Used to build a smoothed twin network on which autograd gradients can be
    checked against finite differences.
    """
    s = 0.5 + v / (1.0 + cfg.beta * v.abs())
    if cfg.rescaled:
        raise ValueError("soft twin is defined for the unrescaled surrogate")
    return s


class _SpikeFn(torch.autograd.Function):
    """Heaviside forward, SuperSpike surrogate backward."""

    @staticmethod
    def forward(ctx, v, beta, rescaled):
        ctx.save_for_backward(v)
        ctx.beta = beta
        ctx.rescaled = rescaled
        return (v >= 0).to(v.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (v,) = ctx.saved_tensors
        h = 1.0 / (ctx.beta * v.abs() + 1.0) ** 2
        if ctx.rescaled:
            h = h * (ctx.beta + 1.0) ** 2
        return grad_output * h, None, None


def spike(v: torch.Tensor, cfg: SurrogateConfig) -> torch.Tensor:
    """Binary spikes from membrane-minus-threshold with surrogate gradient."""
    return _SpikeFn.apply(v, cfg.beta, cfg.rescaled)
