"""Membrane and spike-train statistics plus their closed-form sampling laws.

When synaptic weights are drawn at random, the time-averaged membrane mean
and standard deviation of each neuron are themselves random variables.  Their
distributions have closed forms (normal, gamma, Nakagami) which this module
evaluates and compares against simulation via Kolmogorov-Smirnov tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .dynamics import Network, as_tensor
from .kernel import KernelIntegrals

THETA = 1.0


@dataclass
class MembraneStats:
    """Per-neuron time-averaged membrane statistics plus a pooled histogram."""

    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if np.any(self.sigma_hat < 0):
            raise ValueError("sigma_hat must be >= 0")

    def mean_driven_fraction(self, theta: float = THETA) -> float:
        """Fraction of neurons whose sampled membrane mean reaches threshold."""
        return float(np.mean(self.mu_hat >= theta))


def _fd_histogram(values: np.ndarray):
    """Pooled histogram with Freedman-Diaconis binning."""
    counts, edges = np.histogram(values, bins="fd")
    return edges, counts


def measure_membrane_stats(
    network: Network,
    x,
    layer: int = 0,
    warmup: int | None = None,
) -> MembraneStats:
    """Free-membrane statistics of one hidden layer under the given drive.

    Runs the network with thresholding disabled (no reset, no spikes reach
    downstream layers) and averages the membrane potential of each neuron over
    all post-warmup steps and samples.  The warmup default is five membrane
    time constants, by which the start-up transient has decayed below 1% of
    its initial size.
    """
    if warmup is None:
        warmup = int(round(5 * network.layers[layer].neuron.tau_mem / network.dt))
    x = as_tensor(x)
    import torch

    with torch.no_grad():
        record = network.forward(x, no_reset=True, record_membrane=True)
    u = record.membranes[layer].numpy()  # (samples, steps, neurons)
    if u.shape[1] - warmup < 100:
        raise ValueError(
            f"only {u.shape[1] - warmup} post-warmup steps, need >= 100"
        )
    u = u[:, warmup:, :]
    mu_hat = u.mean(axis=(0, 1))
    sigma_hat = u.std(axis=(0, 1))
    edges, counts = _fd_histogram(u.reshape(-1))
    return MembraneStats(mu_hat=mu_hat, sigma_hat=sigma_hat, bin_edges=edges, counts=counts)


# -- closed-form sampling distributions ----------------------------------------


@dataclass
class SamplingTheory:
    """Distribution parameters of the weight-sampling statistics.

    For n inputs firing at nu with PSP-kernel integrals (eps_bar, eps_hat)
    and a zero-mean weight draw targeting membrane std sigma_u:

      mu_hat_U    ~ Normal(0, mu_var)   with mu_var = sigma_u^2 nu eps_bar^2/eps_hat
      sigma_hat_U^2 ~ Gamma(n/2, 2 sigma_u^2/n)
      sigma_hat_U ~ Nakagami(n/2, sigma_u^2)
    """

    mu_var: float
    gamma_shape: float
    gamma_scale: float
    nakagami_shape: float
    nakagami_spread: float
    mean_driven_fraction: float

    def __post_init__(self):
        for name in ("mu_var", "gamma_shape", "gamma_scale",
                     "nakagami_shape", "nakagami_spread"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def mu_cdf(self, x):
        return 0.5 * (1.0 + special.erf(np.asarray(x) / math.sqrt(2.0 * self.mu_var)))

    def sigma2_cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return special.gammainc(self.gamma_shape, x / self.gamma_scale)

    def sigma_cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return special.gammainc(
            self.nakagami_shape, self.nakagami_shape * x**2 / self.nakagami_spread
        )

    def sigma_interval(self, coverage: float = 0.99):
        """Central interval of the Nakagami law for sigma_hat_U."""
        lo = (1.0 - coverage) / 2.0
        m, omega = self.nakagami_shape, self.nakagami_spread
        q = special.gammaincinv(m, [lo, 1.0 - lo])
        return tuple(np.sqrt(q * omega / m))


def sampling_theory(
    n: int, nu: float, eps: KernelIntegrals, sigma_u: float, theta: float = THETA
) -> SamplingTheory:
    """Closed-form sampling laws of (mu_hat_U, sigma_hat_U) over weight draws.

    nu in Hz.  The mean-driven fraction is the predicted probability that a
    neuron's sampled membrane mean reaches threshold, P(mu_hat_U >= theta).
    """
    if n <= 0 or nu <= 0 or sigma_u <= 0:
        raise ValueError("n, nu, and sigma_u must be positive")
    mu_var = sigma_u**2 * nu * eps.eps_bar**2 / eps.eps_hat
    fraction = 0.5 * (1.0 - math.erf(theta / math.sqrt(2.0 * mu_var)))
    return SamplingTheory(
        mu_var=mu_var,
        gamma_shape=n / 2.0,
        gamma_scale=2.0 * sigma_u**2 / n,
        nakagami_shape=n / 2.0,
        nakagami_spread=sigma_u**2,
        mean_driven_fraction=fraction,
    )


# -- spike-train statistics -----------------------------------------------------


@dataclass
class SpiketrainStats:
    rates: np.ndarray  # (samples, neurons), Hz
    isi_cv: np.ndarray  # CV per neuron with >= 3 spikes, pooled over samples
    population_rate_std: np.ndarray  # (samples,), Hz


def spiketrain_stats(raster: np.ndarray, dt: float, filter_tau: float = 5.0) -> SpiketrainStats:
    """Rates, ISI variability, and population-rate fluctuation of a raster.

    raster has shape (samples, steps, neurons) binned at dt ms.  The
    population rate trace is the per-step population spike count normalized to
    Hz and smoothed with an exponential filter of time constant filter_tau ms.
    """
    raster = np.asarray(raster)
    n_samples, n_steps, n_neurons = raster.shape
    duration_s = n_steps * dt * 1e-3
    rates = raster.sum(axis=1) / duration_s

    cvs = []
    for s in range(n_samples):
        for i in range(n_neurons):
            steps = np.nonzero(raster[s, :, i])[0]
            if len(steps) >= 3:
                isi = np.diff(steps) * dt
                mean = isi.mean()
                if mean > 0:
                    cvs.append(isi.std() / mean)

    lam = math.exp(-dt / filter_tau)
    pop = raster.mean(axis=2) / (dt * 1e-3)  # (samples, steps), Hz
    filtered = np.empty_like(pop)
    acc = np.zeros(n_samples)
    for t in range(n_steps):
        acc = lam * acc + (1.0 - lam) * pop[:, t]
        filtered[:, t] = acc
    return SpiketrainStats(
        rates=rates,
        isi_cv=np.asarray(cvs),
        population_rate_std=filtered.std(axis=1),
    )


# -- Kolmogorov-Smirnov comparison ----------------------------------------------


@dataclass
class KSResult:
    statistic: float
    critical: float
    level: float
    passed: bool


def distribution_compare(samples, cdf, level: float = 0.01) -> KSResult:
    """Two-sided KS test of samples against a reference CDF.

    Pass iff the statistic is below the asymptotic critical value
    sqrt(-ln(level/2)/2)/sqrt(n).
    """
    samples = np.sort(np.asarray(samples, dtype=float))
    n = len(samples)
    if n < 100:
        raise ValueError(f"need >= 100 samples, got {n}")
    f = np.asarray(cdf(samples), dtype=float)
    grid = np.arange(1, n + 1) / n
    d_plus = np.max(grid - f)
    d_minus = np.max(f - (grid - 1.0 / n))
    statistic = max(d_plus, d_minus)
    critical = math.sqrt(-math.log(level / 2.0) / 2.0) / math.sqrt(n)
    return KSResult(
        statistic=float(statistic),
        critical=float(critical),
        level=level,
        passed=bool(statistic < critical),
    )


# -- CSV emission ----------------------------------------------------------------


def write_membrane_csv(path, stats: MembraneStats) -> None:
    """Per-neuron membrane statistics: neuron, mu_hat, sigma_hat."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["neuron", "mu_hat", "sigma_hat"])
        for i, (mu, sig) in enumerate(zip(stats.mu_hat, stats.sigma_hat)):
            writer.writerow([i, repr(float(mu)), repr(float(sig))])


def write_histogram_csv(path, stats: MembraneStats) -> None:
    """Pooled membrane histogram: bin_left, bin_right, count."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(stats.bin_edges[:-1], stats.bin_edges[1:], stats.counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def write_spiketrain_csv(path, stats: SpiketrainStats) -> None:
    """Per-neuron rates: sample, neuron, rate_hz."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "neuron", "rate_hz"])
        for s in range(stats.rates.shape[0]):
            for i in range(stats.rates.shape[1]):
                writer.writerow([s, i, repr(float(stats.rates[s, i]))])


def write_cv_csv(path, stats: SpiketrainStats) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["isi_cv"])
        for cv in stats.isi_cv:
            writer.writerow([repr(float(cv))])
