"""PSP kernel and its integrals.

The post-synaptic potential (PSP) kernel eps(t) is the membrane response of a
current-based LIF neuron to a single unit-weight input spike.  Its integral
eps_bar and squared integral eps_hat feed all weight-initialization formulas.
Both can be computed in closed form or with the exact discrete-time recursion
used by the simulator; at coarse time steps (dt = 2 ms) the two differ
noticeably, and the discrete values are the ones that match simulated
fluctuations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Relative tolerance below which tau_mem ~ tau_syn switches to the
# alpha-function limit (avoids catastrophic cancellation in 1/(1 - tm/ts)).
_EQUAL_TAU_RTOL = 1e-6

CURRENT_BASED = "current_based"
DELTA = "delta"


@dataclass(frozen=True)
class KernelParams:
    """Time constants defining the PSP kernel, in seconds."""

    tau_mem: float
    tau_syn: float = 0.0
    synapse_kind: str = CURRENT_BASED

    def __post_init__(self):
        if self.synapse_kind not in (CURRENT_BASED, DELTA):
            raise ValueError(f"unknown synapse kind: {self.synapse_kind!r}")
        if self.tau_mem <= 0:
            raise ValueError("tau_mem must be positive")
        if self.synapse_kind == CURRENT_BASED and self.tau_syn <= 0:
            raise ValueError("tau_syn must be positive for current-based synapses")


@dataclass(frozen=True)
class KernelIntegrals:
    """Integral of the kernel (eps_bar, seconds) and of its square (eps_hat)."""

    eps_bar: float
    eps_hat: float

    def __post_init__(self):
        if self.eps_bar <= 0 or self.eps_hat <= 0:
            raise ValueError("kernel integrals must be positive")
        if self.eps_hat >= self.eps_bar:
            # holds for any kernel whose peak is below 1
            raise ValueError("eps_hat must be smaller than eps_bar")


def psp_kernel_eval(t: float, p: KernelParams) -> float:
    """Evaluate the continuous-time PSP kernel at time ``t`` (seconds)."""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if t < 0:
        return 0.0
    if p.synapse_kind == DELTA:
        return math.exp(-t / p.tau_mem)
    if abs(1.0 - p.tau_mem / p.tau_syn) < _EQUAL_TAU_RTOL:
        # alpha-function limit for tau_mem -> tau_syn
        return (t / p.tau_syn) * math.exp(-t / p.tau_mem)
    scale = 1.0 / (1.0 - p.tau_mem / p.tau_syn)
    return scale * (math.exp(-t / p.tau_syn) - math.exp(-t / p.tau_mem))


def kernel_integrals_analytic(p: KernelParams) -> KernelIntegrals:
    """Closed-form kernel integrals (continuous time)."""
    if p.synapse_kind == DELTA:
        return KernelIntegrals(eps_bar=p.tau_mem, eps_hat=p.tau_mem / 2.0)
    return KernelIntegrals(
        eps_bar=p.tau_syn,
        eps_hat=p.tau_syn**2 / (2.0 * (p.tau_syn + p.tau_mem)),
    )


def default_horizon(p: KernelParams) -> float:
    """Default integration horizon; residual tail < 1e-12 of eps_bar."""
    return 30.0 * max(p.tau_mem, p.tau_syn)


def kernel_integrals_numeric(
    p: KernelParams, dt: float, horizon: float | None = None
) -> KernelIntegrals:
    """Kernel integrals under the simulator's own discrete update rule.

    Simulates the single-spike response (unit weight, one input spike at step
    0) with the same recursion the network simulator uses and sums
    u[n]*dt and u[n]^2*dt.  Raises if the horizon truncates more than 1e-6
    of eps_bar.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon is None:
        horizon = default_horizon(p)
    tau_big = max(p.tau_mem, p.tau_syn)
    if horizon < 20.0 * tau_big:
        raise ValueError(
            f"horizon {horizon:g}s too short: need >= 20*max(tau) = {20 * tau_big:g}s"
        )

    lam_mem = math.exp(-dt / p.tau_mem)
    n_steps = int(round(horizon / dt))

    if p.synapse_kind == DELTA:
        # Delta synapse: the spike enters the membrane directly.
        u = 1.0
        sum_u = 0.0
        sum_u2 = 0.0
        for _ in range(n_steps):
            sum_u += u
            sum_u2 += u * u
            u *= lam_mem
        tail_u = u / (1.0 - lam_mem)
    else:
        lam_syn = math.exp(-dt / p.tau_syn)
        u = 0.0
        i = 1.0  # current after the input spike at step 0
        sum_u = 0.0
        sum_u2 = 0.0
        for _ in range(n_steps):
            u = lam_mem * u + (1.0 - lam_mem) * i
            i = lam_syn * i
            sum_u += u
            sum_u2 += u * u
        # geometric tails of the linear recursion past the horizon
        tail_i = i / (1.0 - lam_syn)
        tail_u = (lam_mem * u + (1.0 - lam_mem) * tail_i) / (1.0 - lam_mem)

    if sum_u > 0 and tail_u / sum_u > 1e-6:
        raise ValueError(
            f"horizon {horizon:g}s truncates {tail_u / sum_u:.2e} of eps_bar "
            "(limit 1e-6); increase the horizon"
        )
    return KernelIntegrals(eps_bar=sum_u * dt, eps_hat=sum_u2 * dt)
