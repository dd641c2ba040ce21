"""Fluctuation-driven initialization and training of spiking neural networks.

Submodules:
  kernel       PSP kernel and its integrals (analytic and discrete-time)
  init         weight-distribution parameters hitting a fluctuation target
  dynamics     batched LIF network simulator with surrogate-gradient spikes
  surrogate    SuperSpike surrogate derivative and spike nonlinearity
  training     losses, regularizers, SMORMS3/SGD, training loop
  datasets     Randman/Poisson generation, SHD loading, spike-pack I/O
  diagnostics  membrane/spike statistics and their sampling distributions
  config       sectioned key=value experiment configuration
  cli          experiment driver (fluctsnn entry point)
"""

__version__ = "1.0.0"

from .init import FluctuationTarget, InputStats, init_feedforward, predict_fluctuations
from .kernel import KernelIntegrals, KernelParams, kernel_integrals_numeric

__all__ = [
    "__version__",
    "FluctuationTarget",
    "InputStats",
    "KernelIntegrals",
    "KernelParams",
    "init_feedforward",
    "kernel_integrals_numeric",
    "predict_fluctuations",
]
