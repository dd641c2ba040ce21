import math

import numpy as np
import pytest

from fluctsnn.kernel import (
    DELTA,
    KernelIntegrals,
    KernelParams,
    default_horizon,
    kernel_integrals_analytic,
    kernel_integrals_numeric,
    psp_kernel_eval,
)

P_EXC = KernelParams(tau_mem=0.020, tau_syn=0.010)
P_INH = KernelParams(tau_mem=0.010, tau_syn=0.005)


class TestKernelEval:
    def test_negative_time_is_zero(self):
        assert psp_kernel_eval(-0.001, P_EXC) == 0.0

    def test_zero_time_is_zero(self):
        assert psp_kernel_eval(0.0, P_EXC) == 0.0

    def test_alpha_function_limit(self):
        p = KernelParams(tau_mem=0.020, tau_syn=0.020)
        assert psp_kernel_eval(0.020, p) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_nonnegative_everywhere(self):
        ts = np.linspace(0.0, 0.5, 5001)
        assert all(psp_kernel_eval(t, P_EXC) >= 0.0 for t in ts)

    def test_nonfinite_time_rejected(self):
        with pytest.raises(ValueError):
            psp_kernel_eval(float("nan"), P_EXC)


class TestAnalytic:
    def test_current_based_values(self):
        eps = kernel_integrals_analytic(P_EXC)
        assert eps.eps_bar == pytest.approx(0.010, rel=1e-12)
        assert eps.eps_hat == pytest.approx(0.01**2 / (2 * 0.03), rel=1e-12)

    def test_delta_values(self):
        eps = kernel_integrals_analytic(KernelParams(tau_mem=0.020, synapse_kind=DELTA))
        assert (eps.eps_bar, eps.eps_hat) == (0.020, 0.010)

    def test_quadrature_matches_analytic(self):
        # trapezoid integration of the closed-form kernel at fine dt
        dt = 1e-6
        ts = np.arange(0.0, 0.6, dt)
        vals = np.array([psp_kernel_eval(t, P_EXC) for t in ts])
        eps = kernel_integrals_analytic(P_EXC)
        assert np.trapezoid(vals, dx=dt) == pytest.approx(eps.eps_bar, rel=1e-4)
        assert np.trapezoid(vals**2, dx=dt) == pytest.approx(eps.eps_hat, rel=1e-4)

    def test_scale_free_eps_hat_symmetric_under_tau_swap(self):
        # the un-normalized double exponential is symmetric in the two time
        # constants, so eps_hat divided by the squared normalization
        # (eps_bar = tau_syn) must be invariant under swapping them
        a = kernel_integrals_analytic(KernelParams(0.020, 0.010))
        b = kernel_integrals_analytic(KernelParams(0.010, 0.020))
        assert a.eps_hat / a.eps_bar**2 == pytest.approx(
            b.eps_hat / b.eps_bar**2, rel=1e-12
        )
        assert a.eps_bar != b.eps_bar


class TestNumeric:
    def test_table_values_exc(self, eps_exc):
        assert eps_exc.eps_bar == pytest.approx(0.0110, abs=1e-4)
        assert eps_exc.eps_hat == pytest.approx(0.0020, abs=1e-4)

    def test_table_values_inh(self, eps_inh):
        assert eps_inh.eps_bar == pytest.approx(0.0061, abs=1e-4)
        assert eps_inh.eps_hat == pytest.approx(0.0012, abs=1e-4)

    def test_converges_to_analytic(self):
        ana = kernel_integrals_analytic(P_EXC)
        errs = []
        for dt in (0.002, 0.001, 0.0005, 0.0001):
            num = kernel_integrals_numeric(P_EXC, dt)
            errs.append(abs(num.eps_hat - ana.eps_hat) / ana.eps_hat)
        assert errs == sorted(errs, reverse=True)
        fine = kernel_integrals_numeric(P_EXC, 1e-5)
        assert fine.eps_bar == pytest.approx(ana.eps_bar, rel=0.01)
        assert fine.eps_hat == pytest.approx(ana.eps_hat, rel=0.01)

    def test_delta_numeric(self):
        p = KernelParams(tau_mem=0.020, synapse_kind=DELTA)
        num = kernel_integrals_numeric(p, 1e-5)
        ana = kernel_integrals_analytic(p)
        assert num.eps_bar == pytest.approx(ana.eps_bar, rel=0.01)
        assert num.eps_hat == pytest.approx(ana.eps_hat, rel=0.01)

    def test_short_horizon_rejected(self):
        with pytest.raises(ValueError, match="horizon"):
            kernel_integrals_numeric(P_EXC, 0.002, horizon=0.1)

    def test_default_horizon(self):
        assert default_horizon(P_EXC) == pytest.approx(0.6)


class TestValidation:
    def test_bad_params(self):
        with pytest.raises(ValueError):
            KernelParams(tau_mem=-1.0, tau_syn=0.01)
        with pytest.raises(ValueError):
            KernelParams(tau_mem=0.02, tau_syn=0.0)
        with pytest.raises(ValueError):
            KernelParams(tau_mem=0.02, tau_syn=0.01, synapse_kind="nope")

    def test_integral_ordering_enforced(self):
        with pytest.raises(ValueError):
            KernelIntegrals(eps_bar=0.001, eps_hat=0.002)
        with pytest.raises(ValueError):
            KernelIntegrals(eps_bar=-0.01, eps_hat=0.001)
