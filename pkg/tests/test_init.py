import math

import numpy as np
import pytest

from fluctsnn.init import (
    DalianStats,
    FluctuationTarget,
    InputStats,
    UnreachableTargetError,
    WeightSpec,
    delta_ei,
    exponential_spec,
    init_dalian_ff_exp,
    init_dalian_lognormal,
    init_dalian_rec_exp,
    init_feedforward,
    init_kaiming,
    init_recurrent,
    lognormal_spec,
    normal_spec,
    predict_fluctuations,
    sample_weights,
)
from fluctsnn.kernel import KernelIntegrals

# reference kernel integrals at dt = 2 ms, used where worked values assume them
EPS_E = KernelIntegrals(0.0110, 0.0020)
EPS_I = KernelIntegrals(0.0061, 0.0012)

SHD = InputStats(n_in=700, nu=15.8)
RANDMAN = InputStats(n_in=20, nu=5.0)


class TestTarget:
    def test_xi_conversion(self):
        t = FluctuationTarget(mu_u=0.0, xi=2.0)
        assert t.sigma == pytest.approx(0.5)
        assert FluctuationTarget(sigma_u=0.5).xi_value == pytest.approx(2.0)

    def test_exactly_one_parameterization(self):
        with pytest.raises(ValueError):
            FluctuationTarget(sigma_u=1.0, xi=1.0)
        with pytest.raises(ValueError):
            FluctuationTarget()

    def test_mean_below_threshold(self):
        with pytest.raises(ValueError):
            FluctuationTarget(mu_u=1.0, sigma_u=1.0)


class TestFeedforward:
    def test_shd_magnitude(self, eps_exc):
        spec = init_feedforward(FluctuationTarget(sigma_u=1.0), SHD, eps_exc)
        assert 0.20 <= spec.params[1] <= 0.24

    def test_randman_closed_form(self):
        spec = init_feedforward(FluctuationTarget(sigma_u=1.0), RANDMAN, EPS_E)
        assert spec.params[1] == pytest.approx(math.sqrt(5.0), rel=1e-12)

    def test_shd_randman_ratio(self, eps_exc):
        shd = init_feedforward(FluctuationTarget(sigma_u=1.0), SHD, eps_exc)
        rm = init_feedforward(FluctuationTarget(sigma_u=1.0), RANDMAN, eps_exc)
        assert 0.08 <= shd.params[1] / rm.params[1] <= 0.12

    def test_centered_target_gives_zero_mean(self):
        for xi in (0.5, 1.0, 3.0):
            spec = init_feedforward(FluctuationTarget(mu_u=0.0, xi=xi), SHD, EPS_E)
            assert spec.params[0] == 0.0

    def test_round_trip(self, eps_exc):
        target = FluctuationTarget(mu_u=0.4, xi=1.5)
        spec = init_feedforward(target, SHD, eps_exc)
        mu, sigma = predict_fluctuations(spec, SHD, eps_exc)
        assert mu == pytest.approx(0.4, abs=1e-12)
        assert sigma == pytest.approx(target.sigma, rel=1e-12)

    def test_scale_law(self, eps_exc):
        # sigma_w scales as 1/sqrt(n*nu)
        s1 = init_feedforward(FluctuationTarget(sigma_u=1.0), InputStats(100, 10.0), eps_exc)
        s2 = init_feedforward(FluctuationTarget(sigma_u=1.0), InputStats(400, 10.0), eps_exc)
        s3 = init_feedforward(FluctuationTarget(sigma_u=1.0), InputStats(100, 40.0), eps_exc)
        assert s1.params[1] / s2.params[1] == pytest.approx(2.0, rel=1e-12)
        assert s1.params[1] / s3.params[1] == pytest.approx(2.0, rel=1e-12)

    def test_unreachable_target_names_feasible_xi(self, eps_exc):
        with pytest.raises(UnreachableTargetError, match="xi <="):
            init_feedforward(FluctuationTarget(mu_u=0.99, xi=50.0), SHD, eps_exc)


class TestRecurrent:
    STATS = InputStats(n_in=700, nu=15.8, n_rec=128)

    def test_closed_form_example(self):
        ff, rec = init_recurrent(
            FluctuationTarget(sigma_u=1.0, alpha=0.9), self.STATS, EPS_E
        )
        assert ff.params[1] == pytest.approx(0.2017, abs=5e-4)
        assert rec.params[1] == pytest.approx(0.1572, abs=5e-4)

    def test_round_trip(self, eps_exc):
        target = FluctuationTarget(mu_u=0.2, xi=2.0, alpha=0.7)
        pair = init_recurrent(target, self.STATS, eps_exc)
        mu, sigma = predict_fluctuations(pair, self.STATS, eps_exc)
        assert mu == pytest.approx(0.2, abs=1e-12)
        assert sigma == pytest.approx(target.sigma, rel=1e-12)

    def test_alpha_limit_matches_feedforward(self, eps_exc):
        near_one = FluctuationTarget(sigma_u=1.0, alpha=1.0 - 1e-9)
        ff, rec = init_recurrent(near_one, self.STATS, eps_exc)
        pure = init_feedforward(FluctuationTarget(sigma_u=1.0), SHD, eps_exc)
        assert ff.params[1] == pytest.approx(pure.params[1], rel=1e-6)
        assert rec.params[1] < 1e-4

    def test_common_mean(self, eps_exc):
        ff, rec = init_recurrent(
            FluctuationTarget(mu_u=0.3, xi=1.0), self.STATS, eps_exc
        )
        assert ff.params[0] == rec.params[0]


class TestDalian:
    FF = DalianStats(n_E=128, n_I=32, nu_E=15.8, nu_I=15.8, eps_E=EPS_E, eps_I=EPS_I)
    REC = DalianStats(
        n_E=828, n_I=32, nu_E=15.8, nu_I=15.8, eps_E=EPS_E, eps_I=EPS_I,
        n_F=700, n_R=128,
    )

    def test_ff_exp_example(self):
        assert delta_ei(self.FF) == pytest.approx(0.1386, abs=5e-5)
        exc, inh = init_dalian_ff_exp(FluctuationTarget(sigma_u=1.0), self.FF)
        assert exc.params[0] == pytest.approx(8.439, abs=1e-3)
        assert inh.params[0] == pytest.approx(1.170, abs=1e-3)

    def test_ff_exp_round_trip(self):
        pair = init_dalian_ff_exp(FluctuationTarget(sigma_u=0.7), self.FF)
        mu, sigma = predict_fluctuations(pair, self.FF)
        assert mu == pytest.approx(0.0, abs=1e-12)
        assert sigma == pytest.approx(0.7, rel=1e-12)

    def test_ff_exp_scaling(self):
        one = init_dalian_ff_exp(FluctuationTarget(sigma_u=1.0), self.FF)
        two = init_dalian_ff_exp(FluctuationTarget(sigma_u=2.0), self.FF)
        assert two[0].params[0] == pytest.approx(one[0].params[0] / 2.0, rel=1e-12)
        assert two[1].params[0] == pytest.approx(one[1].params[0] / 2.0, rel=1e-12)

    def test_ff_exp_symmetric_drive(self):
        stats = DalianStats(n_E=100, n_I=100, nu_E=10.0, nu_I=10.0,
                            eps_E=EPS_E, eps_I=EPS_E)
        exc, inh = init_dalian_ff_exp(FluctuationTarget(sigma_u=1.0), stats)
        assert delta_ei(stats) == pytest.approx(1.0)
        assert exc.params[0] == pytest.approx(inh.params[0], rel=1e-12)

    def test_rec_exp_delta_r(self):
        triple = init_dalian_rec_exp(
            FluctuationTarget(sigma_u=1.0, alpha=0.9), self.REC
        )
        d_r = math.sqrt(0.9 * 128 / 70)
        assert d_r == pytest.approx(1.2829, abs=1e-4)
        lam_f, lam_r = triple[0].params[0], triple[1].params[0]
        assert lam_r / lam_f == pytest.approx(d_r, rel=1e-12)

    def test_rec_exp_round_trip(self):
        for alpha in (0.5, 0.9):
            triple = init_dalian_rec_exp(
                FluctuationTarget(sigma_u=1.0, alpha=alpha), self.REC
            )
            mu, sigma = predict_fluctuations(triple, self.REC)
            assert mu == pytest.approx(0.0, abs=1e-10)
            assert sigma == pytest.approx(1.0, rel=1e-10)

    def test_rec_exp_alpha_limit(self):
        near = init_dalian_rec_exp(
            FluctuationTarget(sigma_u=1.0, alpha=1.0 - 1e-9), self.REC
        )
        # recurrent excitation vanishes: its rate diverges, mean weight -> 0
        assert near[1].mean() < 1e-4

    def test_lognormal_ff_round_trip(self):
        pair = init_dalian_lognormal(FluctuationTarget(sigma_u=1.0), self.FF)
        assert all(s.params[1] == 1.0 for s in pair)
        mu, sigma = predict_fluctuations(pair, self.FF)
        assert mu == pytest.approx(0.0, abs=1e-10)
        assert sigma == pytest.approx(1.0, rel=1e-10)

    def test_lognormal_ff_symmetric_drive(self):
        stats = DalianStats(n_E=100, n_I=100, nu_E=10.0, nu_I=10.0,
                            eps_E=EPS_E, eps_I=EPS_E)
        exc, inh = init_dalian_lognormal(FluctuationTarget(sigma_u=1.0), stats)
        assert exc.params[0] == pytest.approx(inh.params[0], rel=1e-12)

    def test_lognormal_rec_round_trip(self):
        triple = init_dalian_lognormal(
            FluctuationTarget(sigma_u=1.0, alpha=0.9), self.REC, recurrent=True
        )
        mu, sigma = predict_fluctuations(triple, self.REC)
        assert mu == pytest.approx(0.0, abs=1e-10)
        assert sigma == pytest.approx(1.0, rel=1e-10)

    def test_balance_requires_zero_mean(self):
        with pytest.raises(ValueError, match="balanced"):
            init_dalian_ff_exp(FluctuationTarget(mu_u=0.5, xi=1.0), self.FF)


class TestKaiming:
    def test_values(self):
        assert init_kaiming(100).params[1] ** 2 == pytest.approx(0.02, rel=1e-12)
        assert init_kaiming(2).params[1] == pytest.approx(1.0, rel=1e-12)
        assert init_kaiming(700).params[1] == pytest.approx(0.05345, abs=1e-5)

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            init_kaiming(0)


class TestPredict:
    def test_normal_inverse(self, eps_exc):
        spec = normal_spec(0.0, 1.0 / math.sqrt(700 * 15.8 * eps_exc.eps_hat))
        mu, sigma = predict_fluctuations(spec, SHD, eps_exc)
        assert (mu, sigma) == (pytest.approx(0.0), pytest.approx(1.0, rel=1e-12))

    def test_zero_sampled_weights(self, eps_exc):
        mu, sigma = predict_fluctuations(np.zeros((1, 700)), SHD, eps_exc)
        assert mu[0] == 0.0 and sigma[0] == 0.0

    def test_sampled_matches_spec_in_expectation(self, eps_exc):
        spec = init_feedforward(FluctuationTarget(sigma_u=1.0), SHD, eps_exc)
        w = sample_weights(spec, 123, (2000, 700))
        mu, sigma = predict_fluctuations(w, SHD, eps_exc)
        assert np.mean(mu) == pytest.approx(0.0, abs=0.05)
        assert np.mean(sigma**2) == pytest.approx(1.0, abs=0.01)

    def test_missing_eps_rejected(self):
        with pytest.raises(ValueError):
            predict_fluctuations(normal_spec(0.0, 1.0), SHD)


class TestSpecsAndSampling:
    def test_normal_nonneg_forbidden(self):
        with pytest.raises(ValueError):
            WeightSpec("normal", (0.0, 1.0), sign="nonneg")

    def test_exponential_moments(self):
        w = sample_weights(exponential_spec(2.0), 7, (1000, 1000))
        assert w.min() >= 0.0
        assert w.mean() == pytest.approx(0.5, abs=0.002)
        assert w.var() == pytest.approx(0.25, abs=0.01)

    def test_lognormal_moments(self):
        spec = lognormal_spec(0.0, 1.0)
        w = sample_weights(spec, 7, (1000, 1000))
        assert w.min() >= 0.0
        assert w.mean() == pytest.approx(math.exp(0.5), rel=0.01)
        assert spec.mean() == pytest.approx(math.exp(0.5), rel=1e-12)

    def test_determinism(self):
        spec = normal_spec(0.0, 1.0)
        a = sample_weights(spec, 42, (16, 16))
        b = sample_weights(spec, 42, (16, 16))
        assert np.array_equal(a, b)

    def test_shape_required(self):
        with pytest.raises(ValueError, match="shape"):
            sample_weights(normal_spec(0.0, 1.0), 0)

    def test_spec_moment_identities(self):
        for spec in (normal_spec(0.3, 0.5), exponential_spec(3.0),
                     lognormal_spec(-1.0, 0.7), WeightSpec("uniform", (0.0, 2.0))):
            assert spec.variance() == pytest.approx(
                spec.second_moment() - spec.mean() ** 2, rel=1e-12
            )
