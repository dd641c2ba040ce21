"""Fluctuation-driven weight initialization.

Maps a target membrane-potential regime (mu_u, sigma_u) plus input statistics
to parameters of the initial weight distribution, for feed-forward, recurrent,
and Dale-constrained (separate excitatory/inhibitory population) networks.
``predict_fluctuations`` is the forward direction: it predicts (mu_u, sigma_u)
from any weight specification, so every initializer can be checked by an exact
algebraic round trip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelIntegrals

THETA = 1.0  # spike threshold in threshold units

NORMAL = "normal"
EXPONENTIAL = "exponential"
LOGNORMAL = "lognormal"
UNIFORM = "uniform"

SIGN_FREE = "free"
SIGN_NONNEG = "nonneg"


class UnreachableTargetError(ValueError):
    """The requested fluctuation target cannot be realized by any variance."""


@dataclass(frozen=True)
class FluctuationTarget:
    """Desired membrane statistics; set exactly one of sigma_u / xi.

    xi = (theta - mu_u) / sigma_u measures the distance of the mean membrane
    potential from threshold in units of the fluctuation magnitude.  alpha is
    the share of the membrane variance carried by feed-forward connections
    (recurrent networks only).
    """

    mu_u: float = 0.0
    sigma_u: float | None = None
    xi: float | None = None
    alpha: float = 0.9

    def __post_init__(self):
        if (self.sigma_u is None) == (self.xi is None):
            raise ValueError("set exactly one of sigma_u and xi")
        if self.mu_u >= THETA:
            raise ValueError("mu_u must lie below the threshold")
        if self.sigma_u is not None and self.sigma_u <= 0:
            raise ValueError("sigma_u must be positive")
        if self.xi is not None and self.xi <= 0:
            raise ValueError("xi must be positive")

    @property
    def sigma(self) -> float:
        """Target sigma_u, converting from xi if necessary."""
        if self.sigma_u is not None:
            return self.sigma_u
        return (THETA - self.mu_u) / self.xi

    @property
    def xi_value(self) -> float:
        return (THETA - self.mu_u) / self.sigma


@dataclass(frozen=True)
class InputStats:
    """Presynaptic population statistics for non-Dalian layers."""

    n_in: int
    nu: float  # Hz
    n_rec: int = 0
    nu_rec: float | None = None

    def __post_init__(self):
        if self.n_in < 1:
            raise ValueError("n_in must be >= 1")
        if self.nu <= 0:
            raise ValueError("nu must be positive")

    @property
    def rec_rate(self) -> float:
        return self.nu if self.nu_rec is None else self.nu_rec


@dataclass(frozen=True)
class DalianStats:
    """Population sizes, rates, and kernel integrals for Dalian layers.

    n_E / n_I are the sizes of the presynaptic excitatory and inhibitory
    populations; for layers with excitatory recurrence, n_F and n_R split the
    excitatory input into feed-forward and recurrent parts.
    """

    n_E: int
    n_I: int
    nu_E: float
    nu_I: float
    eps_E: KernelIntegrals
    eps_I: KernelIntegrals
    n_F: int = 0
    n_R: int = 0


@dataclass(frozen=True)
class WeightSpec:
    """A weight distribution for one connection block.

    params holds (mu_w, sigma_w) for normal, (lam,) for exponential,
    (mu, sigma) of the underlying normal for lognormal, (lo, hi) for uniform.
    """

    family: str
    params: tuple
    sign: str = SIGN_FREE
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.family == NORMAL:
            if self.params[1] < 0:
                raise ValueError("sigma_w must be >= 0")
            if self.sign == SIGN_NONNEG:
                raise ValueError(
                    "normal weights cannot be sign-constrained; "
                    "use exponential or lognormal"
                )
        elif self.family == EXPONENTIAL:
            if self.params[0] <= 0:
                raise ValueError("lambda must be positive")
        elif self.family == LOGNORMAL:
            if self.params[1] <= 0:
                raise ValueError("sigma must be positive")
        elif self.family == UNIFORM:
            if self.params[0] > self.params[1]:
                raise ValueError("uniform bounds out of order")
            if self.sign == SIGN_NONNEG and self.params[0] < 0:
                raise ValueError("nonneg uniform needs lo >= 0")
        else:
            raise ValueError(f"unknown weight family: {self.family!r}")

    # -- distribution moments -------------------------------------------------

    def mean(self) -> float:
        if self.family == NORMAL:
            return self.params[0]
        if self.family == EXPONENTIAL:
            return 1.0 / self.params[0]
        if self.family == LOGNORMAL:
            mu, sigma = self.params
            return math.exp(mu + sigma**2 / 2.0)
        lo, hi = self.params
        return (lo + hi) / 2.0

    def second_moment(self) -> float:
        if self.family == NORMAL:
            mu, sigma = self.params
            return sigma**2 + mu**2
        if self.family == EXPONENTIAL:
            return 2.0 / self.params[0] ** 2
        if self.family == LOGNORMAL:
            mu, sigma = self.params
            return math.exp(2.0 * mu + 2.0 * sigma**2)
        lo, hi = self.params
        return (hi**2 + hi * lo + lo**2) / 3.0

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2


def normal_spec(mu_w: float, sigma_w: float, shape=None) -> WeightSpec:
    return WeightSpec(NORMAL, (mu_w, sigma_w), SIGN_FREE, shape)


def exponential_spec(lam: float, shape=None) -> WeightSpec:
    return WeightSpec(EXPONENTIAL, (lam,), SIGN_NONNEG, shape)


def lognormal_spec(mu: float, sigma: float, shape=None) -> WeightSpec:
    return WeightSpec(LOGNORMAL, (mu, sigma), SIGN_NONNEG, shape)


# -- initializers -------------------------------------------------------------


def _check_variance(var: float, mu_w: float, n: int, nu: float,
                    eps_hat: float, mu_u: float, label: str) -> None:
    if var < 0:
        xi_crit = (THETA - mu_u) / (abs(mu_w) * math.sqrt(n * nu * eps_hat))
        raise UnreachableTargetError(
            f"{label}: negative weight variance; the mean-weight term "
            f"dominates the fluctuation budget. Feasible only for "
            f"xi <= {xi_crit:.6g} (larger sigma_u)."
        )


def init_feedforward(
    target: FluctuationTarget, stats: InputStats, eps: KernelIntegrals
) -> WeightSpec:
    """Normal weight parameters placing a feed-forward layer at the target."""
    if stats.n_rec != 0:
        raise ValueError("init_feedforward expects n_rec = 0")
    n, nu = stats.n_in, stats.nu
    sigma_u = target.sigma
    mu_w = target.mu_u / (n * nu * eps.eps_bar)
    var_w = sigma_u**2 / (n * nu * eps.eps_hat) - mu_w**2
    _check_variance(var_w, mu_w, n, nu, eps.eps_hat, target.mu_u, "feed-forward")
    return normal_spec(mu_w, math.sqrt(var_w))


def init_recurrent(
    target: FluctuationTarget, stats: InputStats, eps: KernelIntegrals
) -> tuple[WeightSpec, WeightSpec]:
    """Feed-forward and recurrent normal specs with a common mean.

    Assumes the hidden-layer rate equals the input rate unless stats.nu_rec
    overrides it; alpha splits the variance budget between the two blocks.
    """
    if stats.n_rec < 1:
        raise ValueError("init_recurrent expects n_rec >= 1")
    alpha = target.alpha
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    n_f, n_r = stats.n_in, stats.n_rec
    nu, nu_r = stats.nu, stats.rec_rate
    sigma_u = target.sigma
    mu_wv = target.mu_u / ((n_f + n_r) * nu * eps.eps_bar)
    var_w = alpha * sigma_u**2 / (n_f * nu * eps.eps_hat) - mu_wv**2
    var_v = (1.0 - alpha) * sigma_u**2 / (n_r * nu_r * eps.eps_hat) - mu_wv**2
    _check_variance(var_w, mu_wv, n_f, nu, eps.eps_hat, target.mu_u, "feed-forward")
    _check_variance(var_v, mu_wv, n_r, nu_r, eps.eps_hat, target.mu_u, "recurrent")
    return normal_spec(mu_wv, math.sqrt(var_w)), normal_spec(mu_wv, math.sqrt(var_v))


def _require_balanced(target: FluctuationTarget) -> float:
    if target.mu_u != 0.0:
        raise ValueError("balanced state required: Dalian init needs mu_u = 0")
    return target.sigma


def delta_ei(stats: DalianStats) -> float:
    """E/I drive ratio n_I nu_I eps_bar_I / (n_E nu_E eps_bar_E)."""
    return (stats.n_I * stats.nu_I * stats.eps_I.eps_bar) / (
        stats.n_E * stats.nu_E * stats.eps_E.eps_bar
    )


def init_dalian_ff_exp(
    target: FluctuationTarget, stats: DalianStats
) -> tuple[WeightSpec, WeightSpec]:
    """Exponential E and I weight rates for a balanced Dalian layer."""
    sigma_u = _require_balanced(target)
    d_ei = delta_ei(stats)
    lam_e = math.sqrt(
        2.0
        * (
            d_ei**2 * stats.n_E * stats.nu_E * stats.eps_E.eps_hat
            + stats.n_I * stats.nu_I * stats.eps_I.eps_hat
        )
    ) / (sigma_u * d_ei)
    lam_i = lam_e * d_ei
    return exponential_spec(lam_e), exponential_spec(lam_i)


def _dalian_rec_deltas(stats: DalianStats, alpha: float) -> tuple[float, float]:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if stats.n_F < 1 or stats.n_R < 1:
        raise ValueError("recurrent Dalian init needs n_F >= 1 and n_R >= 1")
    d_r = math.sqrt(alpha * stats.n_R / (stats.n_F - alpha * stats.n_F))
    eb_e, eb_i = stats.eps_E.eps_bar, stats.eps_I.eps_bar
    d_ei_r = d_r * eb_i * stats.n_I / (eb_e * (d_r * stats.n_F + stats.n_R))
    return d_r, d_ei_r


def init_dalian_rec_exp(
    target: FluctuationTarget, stats: DalianStats
) -> tuple[WeightSpec, WeightSpec, WeightSpec]:
    """Exponential rates for feed-forward E, recurrent E, and I blocks.

    Assumes one common firing rate nu across the F, R and I populations
    (taken from stats.nu_E; stats.nu_I must match).
    """
    sigma_u = _require_balanced(target)
    if stats.nu_E != stats.nu_I:
        raise ValueError("recurrent Dalian init assumes nu_E == nu_I")
    nu = stats.nu_E
    d_r, d_ei_r = _dalian_rec_deltas(stats, target.alpha)
    eh_e, eh_i = stats.eps_E.eps_hat, stats.eps_I.eps_hat
    lam_f = math.sqrt(
        2.0
        * nu
        * (
            d_ei_r**2 * eh_e * (d_r**2 * stats.n_F + stats.n_R)
            + d_r**2 * stats.n_I * eh_i
        )
    ) / (sigma_u * d_r * d_ei_r)
    return (
        exponential_spec(lam_f),
        exponential_spec(lam_f * d_r),
        exponential_spec(lam_f * d_ei_r),
    )


def init_dalian_lognormal(
    target: FluctuationTarget, stats: DalianStats, recurrent: bool = False
) -> tuple[WeightSpec, ...]:
    """Log-normal weight parameters for Dalian layers (sigma fixed to 1).

    Returns (exc, inh) for feed-forward layers and (ff, rec_exc, inh) when
    ``recurrent`` is set.
    """
    sigma_u = _require_balanced(target)
    if not recurrent:
        d_ei = delta_ei(stats)
        denom = (
            stats.n_E * stats.nu_E * stats.eps_E.eps_hat
            + stats.n_I * stats.nu_I * stats.eps_I.eps_hat / d_ei**2
        )
        mu_e = 0.5 * math.log(sigma_u**2 / denom) - 1.0
        mu_i = mu_e + math.log(1.0 / d_ei)
        return lognormal_spec(mu_e, 1.0), lognormal_spec(mu_i, 1.0)

    if stats.nu_E != stats.nu_I:
        raise ValueError("recurrent Dalian init assumes nu_E == nu_I")
    alpha = target.alpha
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    nu = stats.nu_E
    n_f, n_r, n_i = stats.n_F, stats.n_R, stats.n_I
    eb_e, eb_i = stats.eps_E.eps_bar, stats.eps_I.eps_bar
    eh_e, eh_i = stats.eps_E.eps_hat, stats.eps_I.eps_hat
    # log-domain offsets between the three block means, from the variance
    # split (alpha) and from exact E/I balance
    d_r = 0.5 * math.log((n_f - alpha * n_f) / (alpha * n_r))
    d_i = math.log(eb_e * (n_f + n_r * math.exp(d_r)) / (n_i * eb_i))
    denom = nu * (
        n_f * eh_e
        + n_r * eh_e * math.exp(2.0 * d_r)
        + n_i * eh_i * math.exp(2.0 * d_i)
    )
    mu_f = 0.5 * math.log(sigma_u**2 / denom) - 1.0
    return (
        lognormal_spec(mu_f, 1.0),
        lognormal_spec(mu_f + d_r, 1.0),
        lognormal_spec(mu_f + d_i, 1.0),
    )


def init_kaiming(n: int) -> WeightSpec:
    """Centered normal with variance 2/n (He initialization)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return normal_spec(0.0, math.sqrt(2.0 / n))


# -- forward prediction and sampling ------------------------------------------


def predict_fluctuations(spec, stats, eps: KernelIntegrals | None = None):
    """Predict (mu_u, sigma_u) for a weight specification or sampled weights.

    Accepts:
      * WeightSpec + InputStats + eps       (feed-forward)
      * (ff, rec) WeightSpecs + InputStats + eps  (recurrent)
      * (exc, inh) WeightSpecs + DalianStats      (Dalian feed-forward)
      * (ff, rec, inh) WeightSpecs + DalianStats  (Dalian with exc. recurrence)
      * ndarray of sampled weights + InputStats + eps -> per-neuron arrays
    """
    if isinstance(stats, DalianStats):
        if not (isinstance(spec, tuple) and len(spec) in (2, 3)):
            raise ValueError("Dalian prediction needs a (exc, inh) or "
                             "(ff, rec, inh) spec tuple")
        if len(spec) == 2:
            exc, inh = spec
            mu = (
                stats.n_E * exc.mean() * stats.nu_E * stats.eps_E.eps_bar
                - stats.n_I * inh.mean() * stats.nu_I * stats.eps_I.eps_bar
            )
            var = (
                stats.n_E * exc.second_moment() * stats.nu_E * stats.eps_E.eps_hat
                + stats.n_I * inh.second_moment() * stats.nu_I * stats.eps_I.eps_hat
            )
            return mu, math.sqrt(var)
        ff, rec, inh = spec
        nu = stats.nu_E
        mu = (
            stats.n_F * ff.mean() * nu * stats.eps_E.eps_bar
            + stats.n_R * rec.mean() * nu * stats.eps_E.eps_bar
            - stats.n_I * inh.mean() * stats.nu_I * stats.eps_I.eps_bar
        )
        var = (
            stats.n_F * ff.second_moment() * nu * stats.eps_E.eps_hat
            + stats.n_R * rec.second_moment() * nu * stats.eps_E.eps_hat
            + stats.n_I * inh.second_moment() * stats.nu_I * stats.eps_I.eps_hat
        )
        return mu, math.sqrt(var)

    if eps is None:
        raise ValueError("kernel integrals required for non-Dalian prediction")

    if isinstance(spec, np.ndarray):
        w = np.atleast_2d(spec)
        mu = w.sum(axis=1) * stats.nu * eps.eps_bar
        var = (w**2).sum(axis=1) * stats.nu * eps.eps_hat
        return mu, np.sqrt(var)

    if isinstance(spec, tuple):
        ff, rec = spec
        mu = (
            stats.n_in * ff.mean() * stats.nu * eps.eps_bar
            + stats.n_rec * rec.mean() * stats.rec_rate * eps.eps_bar
        )
        var = (
            stats.n_in * ff.second_moment() * stats.nu * eps.eps_hat
            + stats.n_rec * rec.second_moment() * stats.rec_rate * eps.eps_hat
        )
        return mu, math.sqrt(var)

    if isinstance(spec, WeightSpec):
        mu = stats.n_in * spec.mean() * stats.nu * eps.eps_bar
        var = stats.n_in * spec.second_moment() * stats.nu * eps.eps_hat
        return mu, math.sqrt(var)

    raise ValueError(f"cannot predict fluctuations for {type(spec).__name__}")


def sample_weights(spec: WeightSpec, seed: int, shape=None) -> np.ndarray:
    """Draw an i.i.d. weight matrix; deterministic for a given seed."""
    shape = shape if shape is not None else spec.shape
    if shape is None:
        raise ValueError("weight shape required (set spec.shape or pass shape)")
    rng = np.random.default_rng(seed)
    if spec.family == NORMAL:
        mu, sigma = spec.params
        return rng.normal(mu, sigma, size=shape)
    if spec.family == EXPONENTIAL:
        return rng.exponential(1.0 / spec.params[0], size=shape)
    if spec.family == LOGNORMAL:
        mu, sigma = spec.params
        return rng.lognormal(mu, sigma, size=shape)
    lo, hi = spec.params
    return rng.uniform(lo, hi, size=shape)
