"""Surrogate-gradient training: losses, regularizers, optimizers, loop.

Gradients flow through the unrolled network dynamics with the spike
derivative replaced by the SuperSpike surrogate (see surrogate.py); the reset
factor is treated as a constant during backpropagation.  SMORMS3 is the
default optimizer.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .datasets import SpikeBatch, bin_events
from .dynamics import ForwardRecord, Network, as_tensor
from .surrogate import SurrogateConfig, surrogate_derivative


@dataclass
class LossConfig:
    """Activity regularization on top of the supervised loss.

    v_upper is a spike-count bound per sample (population mean), v_lower a
    per-neuron bound; both enter as squared hinges scaled by their strengths.
    """

    lambda_upper: float = 0.0
    v_upper: float = 0.0
    lambda_lower: float = 0.0
    v_lower: float = 1.0

    def __post_init__(self):
        if self.lambda_upper < 0 or self.lambda_lower < 0:
            raise ValueError("regularizer strengths must be >= 0")


def loss_supervised(readout: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy on max-over-time readout potentials.

    The backward pass routes gradient only through the (first) maximal time
    step of each readout trace.
    """
    if labels.max() >= readout.shape[2] or labels.min() < 0:
        raise ValueError("label out of range")
    idx = readout.argmax(dim=1, keepdim=True)  # first maximal step on ties
    scores = readout.gather(1, idx).squeeze(1)
    return torch.nn.functional.cross_entropy(scores, labels)


def regularizer_upper(spike_counts: list[torch.Tensor], cfg: LossConfig) -> torch.Tensor:
    """Squared hinge on each layer's population-mean spike count."""
    total = torch.zeros((), dtype=spike_counts[0].dtype) if spike_counts else torch.zeros(())
    for counts in spike_counts:
        excess = torch.relu(counts.mean(dim=1) - cfg.v_upper)
        total = total + (excess**2).mean()
    return cfg.lambda_upper * total


def regularizer_lower(spike_counts: list[torch.Tensor], cfg: LossConfig) -> torch.Tensor:
    """Squared hinge penalizing neurons below the per-neuron count bound."""
    total = torch.zeros((), dtype=spike_counts[0].dtype) if spike_counts else torch.zeros(())
    for counts in spike_counts:
        deficit = torch.relu(cfg.v_lower - counts)
        total = total + (deficit**2).mean(dim=1).mean()
    return cfg.lambda_lower * total


def total_loss(
    record: ForwardRecord,
    labels: torch.Tensor,
    cfg: LossConfig,
    supervised: bool = True,
    homeostatic: bool = False,
) -> torch.Tensor:
    counts = record.spike_counts()
    loss = torch.zeros((), dtype=record.readout.dtype)
    if supervised:
        loss = loss + loss_supervised(record.readout, labels)
    if cfg.lambda_upper > 0 and counts:
        loss = loss + regularizer_upper(counts, cfg)
    if homeostatic and cfg.lambda_lower > 0 and counts:
        loss = loss + regularizer_lower(counts, cfg)
    return loss


def backprop_through_time(
    network: Network,
    x: torch.Tensor,
    labels: torch.Tensor,
    cfg: LossConfig,
    supervised: bool = True,
    homeostatic: bool = False,
) -> tuple[float, dict[str, torch.Tensor]]:
    """Forward + reverse pass; returns (loss value, gradients per block)."""
    network.require_grad(True)
    for w in network.weights.values():
        w.grad = None
    record = network.forward(x)
    loss = total_loss(record, labels, cfg, supervised, homeostatic)
    loss.backward()
    grads = {
        name: (w.grad.detach().clone() if w.grad is not None else torch.zeros_like(w))
        for name, w in network.weights.items()
    }
    network.require_grad(False)
    return float(loss.detach()), grads


# -- optimizers ---------------------------------------------------------------


class SMORMS3:
    """SMORMS3 adaptive optimizer over a named parameter dict."""

    epsilon = 1e-16

    def __init__(self, params: dict[str, torch.Tensor], lr: float = 1e-3):
        self.params = params
        self.lr = lr
        self.g1 = {k: torch.zeros_like(v) for k, v in params.items()}
        self.g2 = {k: torch.zeros_like(v) for k, v in params.items()}
        self.m = {k: torch.ones_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, torch.Tensor]) -> None:
        eps = self.epsilon
        with torch.no_grad():
            for k, p in self.params.items():
                g = grads[k]
                r = 1.0 / (self.m[k] + 1.0)
                self.g1[k] = (1.0 - r) * self.g1[k] + r * g
                self.g2[k] = (1.0 - r) * self.g2[k] + r * g**2
                ratio = self.g1[k] ** 2 / (self.g2[k] + eps)
                self.m[k] = 1.0 + self.m[k] * (1.0 - ratio)
                p -= g * torch.minimum(torch.full_like(ratio, self.lr), ratio) / (
                    torch.sqrt(self.g2[k]) + eps
                )


class SGD:
    """Plain stochastic gradient descent."""

    def __init__(self, params: dict[str, torch.Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: dict[str, torch.Tensor]) -> None:
        with torch.no_grad():
            for k, p in self.params.items():
                p -= self.lr * grads[k]


def make_optimizer(method: str, params, lr: float):
    if method == "smorms3":
        return SMORMS3(params, lr)
    if method == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {method!r}")


# -- gradient probes ----------------------------------------------------------


@dataclass
class GradientProbe:
    """Per-layer mean absolute gradients of spikes and incoming weights."""

    spike_grads: list[float]
    weight_grads: dict[str, float]
    readout_grad: float


def gradient_probe(
    network: Network,
    x: torch.Tensor,
    labels: torch.Tensor,
    cfg: LossConfig,
    supervised: bool = True,
    homeostatic: bool = False,
) -> GradientProbe:
    """One forward/backward pass probing |dL/dS| per layer and |dL/dW| per block."""
    network.require_grad(True)
    for w in network.weights.values():
        w.grad = None
    record = network.forward(x)
    for steps in record.step_spikes:
        for s in steps:
            if s.requires_grad:  # the first step only sees the zero state
                s.retain_grad()
    record.readout.retain_grad()
    loss = total_loss(record, labels, cfg, supervised, homeostatic)
    loss.backward()
    spike_grads = [
        float(
            torch.stack(
                [s.grad.abs().mean() if s.grad is not None else torch.zeros(())
                 for s in steps]
            ).mean()
        )
        for steps in record.step_spikes
    ]
    weight_grads = {
        name: float(w.grad.abs().mean()) if w.grad is not None else 0.0
        for name, w in network.weights.items()
    }
    readout_grad = (
        float(record.readout.grad.abs().mean())
        if record.readout.grad is not None
        else 0.0
    )
    network.require_grad(False)
    return GradientProbe(spike_grads, weight_grads, readout_grad)


def readout_jacobian_probe(network: Network, x: torch.Tensor) -> list[float]:
    """Per-layer mean |d(readout)/dS| with a unit gradient at the readout.

    Measures how strongly the backward pass attenuates through each layer
    independently of the loss: with a completely silent readout trace the
    max-over-time loss has an exactly zero gradient, which hides the per-layer
    attenuation this probe exposes.
    """
    network.require_grad(True)
    record = network.forward(x)
    for steps in record.step_spikes:
        for s in steps:
            if s.requires_grad:
                s.retain_grad()
    record.readout.sum().backward()
    out = []
    for steps in record.step_spikes:
        grads = [
            s.grad.abs().mean() if s.grad is not None else torch.zeros(())
            for s in steps
        ]
        out.append(float(torch.stack(grads).mean()))
    for w in network.weights.values():
        w.grad = None
    network.require_grad(False)
    return out


# -- training loop ------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 400
    optimizer: str = "smorms3"
    lr: float = 0.05
    loss: LossConfig = field(default_factory=LossConfig)
    priming_epochs: int = 0
    ongoing_homeostasis: bool = False
    seed: int = 0
    probe_gradients: bool = False


@dataclass
class EpochLog:
    epoch: int
    phase: str  # "priming" | "train"
    loss: float
    accuracy: float
    valid_loss: float
    valid_accuracy: float
    layer_rates: list[float]
    spike_grads: list[float]


class DivergenceError(RuntimeError):
    pass


def evaluate(network: Network, x: torch.Tensor, labels: torch.Tensor,
             cfg: LossConfig, batch_size: int = 512):
    """Loss/accuracy/mean layer rates without gradients."""
    losses, correct, total = [], 0, 0
    rate_sums = None
    with torch.no_grad():
        for lo in range(0, x.shape[0], batch_size):
            xb = x[lo : lo + batch_size]
            yb = labels[lo : lo + batch_size]
            rec = network.forward(xb)
            losses.append(float(total_loss(rec, yb, cfg)) * len(yb))
            pred = rec.readout.max(dim=1).values.argmax(dim=1)
            correct += int((pred == yb).sum())
            total += len(yb)
            rates = [float(s.mean()) / network.dt for s in rec.spikes]
            rate_sums = (
                [a + r * len(yb) for a, r in zip(rate_sums, rates)]
                if rate_sums is not None
                else [r * len(yb) for r in rates]
            )
    rates = [r / total for r in rate_sums] if rate_sums else []
    return sum(losses) / total, correct / total, rates


def train(
    network: Network,
    train_batch: SpikeBatch,
    valid_batch: SpikeBatch,
    cfg: TrainConfig,
) -> list[EpochLog]:
    """Mini-batch training with optional homeostatic priming phase.

    During priming the loss is the homeostatic lower-bound term (plus the
    population upper bound); afterwards the supervised loss takes over, with
    the lower bound kept only if ongoing homeostasis is enabled.
    """
    dt_ms = network.dt * 1e3
    x_train = as_tensor(bin_events(train_batch, dt_ms))
    y_train = torch.as_tensor(train_batch.labels)
    x_valid = as_tensor(bin_events(valid_batch, dt_ms))
    y_valid = torch.as_tensor(valid_batch.labels)

    optimizer = make_optimizer(cfg.optimizer, network.parameters(), cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    logs: list[EpochLog] = []

    for epoch in range(cfg.priming_epochs + cfg.epochs):
        priming = epoch < cfg.priming_epochs
        supervised = not priming
        homeostatic = priming or cfg.ongoing_homeostasis

        order = rng.permutation(len(y_train))
        epoch_loss, n_seen = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = torch.as_tensor(order[lo : lo + cfg.batch_size])
            loss, grads = backprop_through_time(
                network, x_train[idx], y_train[idx], cfg.loss,
                supervised=supervised, homeostatic=homeostatic,
            )
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            optimizer.step(grads)
            if network.dale_block_names():
                network.clamp_dale_blocks()
            epoch_loss += loss * len(idx)
            n_seen += len(idx)

        train_loss, train_acc, rates = evaluate(network, x_train, y_train, cfg.loss)
        valid_loss, valid_acc, _ = evaluate(network, x_valid, y_valid, cfg.loss)
        spike_grads: list[float] = []
        if cfg.probe_gradients:
            idx = torch.as_tensor(order[: cfg.batch_size])
            probe = gradient_probe(
                network, x_train[idx], y_train[idx], cfg.loss,
                supervised=supervised, homeostatic=homeostatic,
            )
            spike_grads = probe.spike_grads
        logs.append(
            EpochLog(
                epoch=epoch,
                phase="priming" if priming else "train",
                loss=train_loss,
                accuracy=train_acc,
                valid_loss=valid_loss,
                valid_accuracy=valid_acc,
                layer_rates=rates,
                spike_grads=spike_grads,
            )
        )
    return logs


def write_training_log(path, logs: list[EpochLog]) -> None:
    """Training log CSV: one row per epoch."""
    n_layers = max((len(l.layer_rates) for l in logs), default=0)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["epoch", "phase", "loss", "accuracy", "valid_loss", "valid_accuracy"]
        header += [f"rate_l{i}" for i in range(n_layers)]
        header += [f"spike_grad_l{i}" for i in range(n_layers)]
        writer.writerow(header)
        for log in logs:
            row = [
                log.epoch, log.phase, repr(log.loss), repr(log.accuracy),
                repr(log.valid_loss), repr(log.valid_accuracy),
            ]
            row += [repr(r) for r in log.layer_rates]
            row += [repr(g) for g in log.spike_grads] + [""] * (
                n_layers - len(log.spike_grads)
            )
            writer.writerow(row)
