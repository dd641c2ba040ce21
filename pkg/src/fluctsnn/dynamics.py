"""Discrete-time simulation of dense LIF networks.

Implements the forward dynamics shared by feed-forward, recurrent, Dalian
(separate excitatory/inhibitory populations with sign-constrained blocks) and
skip-connected architectures, plus a non-spiking readout.  The same recursion
is differentiated by the training module, so every quantity here is a torch
tensor; ``simulate`` wraps the forward pass for analysis use and returns
numpy arrays.

Update rule per step (decay factors lam = exp(-dt/tau)):

    I[n+1] = lam_syn * I[n] + W @ S_prev[n] + V @ S_self[n]
    U[n+1] = (lam_mem * U[n] + (1 - lam_mem) * I[n]) * (1 - S[n])
    S[n+1] = step(U[n+1] - theta)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .datasets import DenseSpikes
from .surrogate import SurrogateConfig, soft_spike, spike


@dataclass(frozen=True)
class NeuronParams:
    """LIF time constants in seconds; threshold in threshold units."""

    tau_mem: float
    tau_syn: float
    theta: float = 1.0

    def decay(self, dt: float) -> tuple[float, float]:
        return math.exp(-dt / self.tau_mem), math.exp(-dt / self.tau_syn)


DEFAULT_NEURON = NeuronParams(tau_mem=0.020, tau_syn=0.010)
DALE_EXC_NEURON = NeuronParams(tau_mem=0.020, tau_syn=0.010)
DALE_INH_NEURON = NeuronParams(tau_mem=0.010, tau_syn=0.005)


@dataclass(frozen=True)
class DaleConfig:
    """Excitatory/inhibitory split of a Dale-constrained layer."""

    n_exc: int
    n_inh: int
    neuron_exc: NeuronParams = DALE_EXC_NEURON
    neuron_inh: NeuronParams = DALE_INH_NEURON
    exc_recurrence: bool = True


@dataclass(frozen=True)
class LayerConfig:
    n: int
    neuron: NeuronParams = DEFAULT_NEURON
    recurrent: bool = False
    dale: DaleConfig | None = None
    skip_to_readout: bool = False

    def __post_init__(self):
        if self.dale is not None and self.dale.n_exc + self.dale.n_inh != self.n:
            raise ValueError("dale populations must sum to layer size")

    @property
    def n_out(self) -> int:
        """Units visible downstream (Dale layers expose the E population)."""
        return self.dale.n_exc if self.dale is not None else self.n


class SimulationError(RuntimeError):
    pass


@dataclass
class ForwardRecord:
    """Torch traces from one forward pass, time-stacked as (B, T, units)."""

    readout: torch.Tensor
    spikes: list[torch.Tensor]
    membranes: list[torch.Tensor] | None = None
    # per-layer lists of the per-step spike tensors actually used downstream;
    # the stacked `spikes` copies sit outside the autograd path, so gradient
    # probes must target these
    step_spikes: list[list[torch.Tensor]] | None = None

    def spike_counts(self) -> list[torch.Tensor]:
        """Per-layer spike counts of shape (B, units); keeps the graph."""
        return [s.sum(dim=1) for s in self.spikes]


@dataclass
class SimResult:
    """Numpy view of a recorded simulation."""

    readout: np.ndarray
    spikes: list[np.ndarray]
    membranes: list[np.ndarray] | None
    dt: float

    def layer_rates(self) -> list[float]:
        """Mean firing rate (Hz) per hidden layer."""
        out = []
        for s in self.spikes:
            steps = s.shape[1]
            out.append(float(s.mean() * (1.0 / self.dt)) if steps else 0.0)
        return out


class Network:
    """Dense LIF network: hidden layers (optionally recurrent or Dalian),
    optional skip connections into a non-spiking readout."""

    def __init__(
        self,
        n_in: int,
        layers: list[LayerConfig],
        n_out: int,
        readout_neuron: NeuronParams,
        dt: float = 0.002,
        surrogate: SurrogateConfig = SurrogateConfig(),
    ):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.n_in = n_in
        self.layers = list(layers)
        self.n_out = n_out
        self.readout_neuron = readout_neuron
        self.dt = dt
        self.surrogate = surrogate
        self.weights: dict[str, torch.Tensor] = {}
        self._dale_blocks: set[str] = set()

        fan_in = n_in
        for li, cfg in enumerate(self.layers):
            if cfg.dale is None:
                self._add_weight(f"h{li}.ff", cfg.n, fan_in)
                if cfg.recurrent:
                    self._add_weight(f"h{li}.rec", cfg.n, cfg.n)
            else:
                d = cfg.dale
                for name, rows, cols in (
                    ("fe", d.n_exc, fan_in),
                    ("fi", d.n_inh, fan_in),
                    ("ie", d.n_exc, d.n_inh),
                    ("ii", d.n_inh, d.n_inh),
                ):
                    self._add_weight(f"h{li}.{name}", rows, cols, dale=True)
                if d.exc_recurrence:
                    self._add_weight(f"h{li}.re", d.n_exc, d.n_exc, dale=True)
                    self._add_weight(f"h{li}.ri", d.n_inh, d.n_exc, dale=True)
            fan_in = cfg.n_out
        self._add_weight("out.ff", n_out, fan_in)
        for li, cfg in enumerate(self.layers[:-1] if self.layers else []):
            if cfg.skip_to_readout:
                self._add_weight(f"out.skip{li}", n_out, cfg.n_out)

    def _add_weight(self, name, rows, cols, dale=False):
        self.weights[name] = torch.zeros(rows, cols, dtype=torch.float64)
        if dale:
            self._dale_blocks.add(name)

    # -- parameter plumbing ---------------------------------------------------

    def set_weights(self, name: str, value) -> None:
        w = self.weights[name]
        t = torch.as_tensor(value, dtype=w.dtype)
        if t.shape != w.shape:
            raise ValueError(f"{name}: expected shape {tuple(w.shape)}, got {tuple(t.shape)}")
        self.weights[name] = t.clone()

    def parameters(self) -> dict[str, torch.Tensor]:
        return self.weights

    def require_grad(self, flag: bool = True) -> None:
        for w in self.weights.values():
            w.requires_grad_(flag)

    def clamp_dale_blocks(self) -> None:
        """Project sign-constrained blocks back to the non-negative cone."""
        with torch.no_grad():
            for name in self._dale_blocks:
                self.weights[name].clamp_(min=0.0)

    def dale_block_names(self) -> set[str]:
        return set(self._dale_blocks)

    def _check_dale_signs(self) -> None:
        for name in self._dale_blocks:
            if (self.weights[name] < 0).any():
                raise SimulationError(f"negative weight in Dale block {name}")

    # -- forward dynamics -----------------------------------------------------

    def forward(
        self,
        x: torch.Tensor,
        no_reset: bool = False,
        record_membrane: bool = False,
        soft: bool = False,
    ) -> ForwardRecord:
        """Run the network for the whole input tensor x of shape (B, T, n_in)."""
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise SimulationError(
                f"input shape {tuple(x.shape)} incompatible with n_in={self.n_in}"
            )
        self._check_dale_signs()
        batch, n_steps, _ = x.shape
        dtype = next(iter(self.weights.values())).dtype if self.weights else torch.float64
        x = x.to(dtype)

        state = [self._init_layer_state(cfg, batch, dtype) for cfg in self.layers]
        lam_out_mem, lam_out_syn = self.readout_neuron.decay(self.dt)
        u_out = torch.zeros(batch, self.n_out, dtype=dtype)
        i_out = torch.zeros(batch, self.n_out, dtype=dtype)

        spikes_rec: list[list[torch.Tensor]] = [[] for _ in self.layers]
        memb_rec: list[list[torch.Tensor]] = [[] for _ in self.layers]
        out_rec: list[torch.Tensor] = []

        for n in range(n_steps):
            # all layers advance synchronously from step-n state, so collect
            # every layer's previous output before any update
            inputs = [x[:, n, :]] + [st["s_out"] for st in state[:-1]]
            last_hidden = state[-1]["s_out"] if self.layers else x[:, n, :]
            skip_inputs = [
                (li, state[li]["s_out"])
                for li, cfg in enumerate(self.layers[:-1] if self.layers else [])
                if cfg.skip_to_readout
            ]

            for li, cfg in enumerate(self.layers):
                self._step_layer(li, cfg, state[li], inputs[li], no_reset, soft)
                spikes_rec[li].append(state[li]["s_all"])
                if record_membrane:
                    memb_rec[li].append(state[li]["u_all"])

            drive = last_hidden.to(dtype) @ self.weights["out.ff"].T
            for li, s in skip_inputs:
                drive = drive + s @ self.weights[f"out.skip{li}"].T
            u_out = lam_out_mem * u_out + (1.0 - lam_out_mem) * i_out
            i_out = lam_out_syn * i_out + drive
            out_rec.append(u_out)

        readout = torch.stack(out_rec, dim=1)
        spikes = [torch.stack(s, dim=1) for s in spikes_rec]
        membranes = [torch.stack(m, dim=1) for m in memb_rec] if record_membrane else None

        for li, st in enumerate(state):
            if not torch.isfinite(st["u_all"]).all():
                raise SimulationError(f"non-finite membrane state in layer {li}")
        if not torch.isfinite(u_out).all():
            raise SimulationError("non-finite membrane state in readout")
        return ForwardRecord(
            readout=readout, spikes=spikes, membranes=membranes,
            step_spikes=spikes_rec,
        )

    def _init_layer_state(self, cfg: LayerConfig, batch: int, dtype):
        z = lambda n: torch.zeros(batch, n, dtype=dtype)
        if cfg.dale is None:
            return {"u": z(cfg.n), "i": z(cfg.n), "s": z(cfg.n),
                    "s_out": z(cfg.n), "s_all": z(cfg.n), "u_all": z(cfg.n)}
        d = cfg.dale
        return {
            "u_e": z(d.n_exc), "u_i": z(d.n_inh),
            "s_e": z(d.n_exc), "s_i": z(d.n_inh),
            "i_fe": z(d.n_exc), "i_re": z(d.n_exc), "i_ie": z(d.n_exc),
            "i_fi": z(d.n_inh), "i_ri": z(d.n_inh), "i_ii": z(d.n_inh),
            "s_out": z(d.n_exc), "s_all": z(d.n_exc + d.n_inh),
            "u_all": z(d.n_exc + d.n_inh),
        }

    def _step_layer(self, li, cfg, st, s_prev, no_reset, soft=False):
        if cfg.dale is None:
            lam_mem, lam_syn = cfg.neuron.decay(self.dt)
            u_new = lam_mem * st["u"] + (1.0 - lam_mem) * st["i"]
            if not no_reset:
                # the reset factor is a constant in the backward pass unless
                # running the fully differentiable soft twin
                s_reset = st["s"] if soft else st["s"].detach()
                u_new = u_new * (1.0 - s_reset)
            i_new = lam_syn * st["i"] + s_prev @ self.weights[f"h{li}.ff"].T
            if cfg.recurrent:
                i_new = i_new + st["s"] @ self.weights[f"h{li}.rec"].T
            if no_reset:
                s_new = torch.zeros_like(u_new)
            elif soft:
                s_new = soft_spike(u_new - cfg.neuron.theta, self.surrogate)
            else:
                s_new = spike(u_new - cfg.neuron.theta, self.surrogate)
            st.update(u=u_new, i=i_new, s=s_new, s_out=s_new, s_all=s_new, u_all=u_new)
            return s_new

        d = cfg.dale
        lam_me, lam_se = d.neuron_exc.decay(self.dt)
        lam_mi, lam_si = d.neuron_inh.decay(self.dt)

        i_e_total = st["i_fe"] + st["i_re"] - st["i_ie"]
        i_i_total = st["i_fi"] + st["i_ri"] - st["i_ii"]
        u_e = lam_me * st["u_e"] + (1.0 - lam_me) * i_e_total
        u_i = lam_mi * st["u_i"] + (1.0 - lam_mi) * i_i_total
        if not no_reset:
            se_reset = st["s_e"] if soft else st["s_e"].detach()
            si_reset = st["s_i"] if soft else st["s_i"].detach()
            u_e = u_e * (1.0 - se_reset)
            u_i = u_i * (1.0 - si_reset)

        w = self.weights
        i_fe = lam_se * st["i_fe"] + s_prev @ w[f"h{li}.fe"].T
        i_fi = lam_se * st["i_fi"] + s_prev @ w[f"h{li}.fi"].T
        i_ie = lam_si * st["i_ie"] + st["s_i"] @ w[f"h{li}.ie"].T
        i_ii = lam_si * st["i_ii"] + st["s_i"] @ w[f"h{li}.ii"].T
        if d.exc_recurrence:
            i_re = lam_se * st["i_re"] + st["s_e"] @ w[f"h{li}.re"].T
            i_ri = lam_se * st["i_ri"] + st["s_e"] @ w[f"h{li}.ri"].T
        else:
            i_re, i_ri = st["i_re"], st["i_ri"]

        if no_reset:
            s_e = torch.zeros_like(u_e)
            s_i = torch.zeros_like(u_i)
        elif soft:
            s_e = soft_spike(u_e - d.neuron_exc.theta, self.surrogate)
            s_i = soft_spike(u_i - d.neuron_inh.theta, self.surrogate)
        else:
            s_e = spike(u_e - d.neuron_exc.theta, self.surrogate)
            s_i = spike(u_i - d.neuron_inh.theta, self.surrogate)

        st.update(
            u_e=u_e, u_i=u_i, s_e=s_e, s_i=s_i,
            i_fe=i_fe, i_re=i_re, i_ie=i_ie,
            i_fi=i_fi, i_ri=i_ri, i_ii=i_ii,
            s_out=s_e,
            s_all=torch.cat([s_e, s_i], dim=1),
            u_all=torch.cat([u_e, u_i], dim=1),
        )
        return s_e


def as_tensor(dense) -> torch.Tensor:
    """Dense spikes (DenseSpikes or array) to a float64 torch tensor."""
    if isinstance(dense, DenseSpikes):
        dense = dense.data
    arr = np.asarray(dense)
    if arr.ndim == 2:
        arr = arr[None]
    return torch.as_tensor(arr, dtype=torch.float64)


def simulate(
    network: Network,
    dense,
    record_membrane: bool = False,
    no_reset: bool = False,
) -> SimResult:
    """Forward-simulate without gradients and return numpy traces."""
    x = as_tensor(dense)
    with torch.no_grad():
        rec = network.forward(x, no_reset=no_reset, record_membrane=record_membrane)
    return SimResult(
        readout=rec.readout.numpy(),
        spikes=[s.numpy() for s in rec.spikes],
        membranes=[m.numpy() for m in rec.membranes] if rec.membranes else None,
        dt=network.dt,
    )


def export_traces_csv(path, traces: list[np.ndarray]) -> None:
    """Write per-layer traces as rows (sample, layer, neuron, step, value)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "layer", "neuron", "step", "value"])
        for layer, arr in enumerate(traces):
            for sample in range(arr.shape[0]):
                for neuron in range(arr.shape[2]):
                    col = arr[sample, :, neuron]
                    for step, value in enumerate(col):
                        writer.writerow([sample, layer, neuron, step, repr(float(value))])
