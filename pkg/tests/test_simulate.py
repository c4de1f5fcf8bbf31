import numpy as np
import pytest

from dynglg.errors import PreconditionError
from dynglg.model import StaticParams
from dynglg.simulate import (
    MomentPlan,
    SimPlan,
    check_conditional_moments,
    correlation_extra_factor,
    correlation_exact,
    gaussian_study_plan,
    kurtosis_closed_form,
    nongaussian_mean_shift,
    nongaussian_study_plan,
    simulate_dataset,
    stacked_obs_cov,
    variance_closed_form,
)


class TestMeanShift:
    def test_values(self):
        J = 100
        assert nongaussian_mean_shift(J, J) == pytest.approx(0.5, abs=1e-15)
        assert nongaussian_mean_shift(J / 2, J) == pytest.approx(0.0, abs=1e-15)
        assert nongaussian_mean_shift(0, J) == pytest.approx(0.5, abs=1e-15)

    def test_vectorized(self):
        t = np.arange(1, 11)
        np.testing.assert_allclose(nongaussian_mean_shift(t, 10),
                                   [nongaussian_mean_shift(int(i), 10) for i in t], atol=1e-15)


class TestPlan:
    def test_holdout_disjoint(self):
        plan = gaussian_study_plan(n_sites=10, J=5, n_holdout=3)
        assert set(plan.train).isdisjoint(plan.holdout)
        assert len(plan.train) == 7

    @pytest.mark.parametrize("kw", [dict(holdout=(0, 0)), dict(holdout=(25,)), dict(lambda1="cauchy"),
                                    dict(n_sites=1), dict(n_sites=3, holdout=(0, 1, 2))])
    def test_invalid(self, kw):
        base = dict(n_sites=20, J=10)
        base.update(kw)
        with pytest.raises(ValueError):
            SimPlan(**base)


class TestSimulate:
    def test_degenerate_mixing(self):
        plan = nongaussian_study_plan(n_sites=10, J=20, nu1=1e-8, nu2=1e-8)
        plan.lambda2_shift = None
        _, truth = simulate_dataset(np.random.default_rng(0), plan)
        lam = np.exp(truth["log_lam1"][None, :] + truth["log_lam2"][:, None])
        assert np.max(np.abs(lam - 1.0)) < 1e-3

    def test_noiseless(self):
        statics = StaticParams(sigma2=0.0, tau2=0.0, phi=0.3, alpha=1.0)
        plan = gaussian_study_plan(n_sites=8, J=12, statics=statics)
        data, truth = simulate_dataset(np.random.default_rng(1), plan)
        expected = np.einsum("tip,tp->ti", data.X, truth["theta"][1:])
        np.testing.assert_array_equal(data.z, expected)

    def test_deterministic(self):
        plan = nongaussian_study_plan(n_sites=8, J=12)
        a, _ = simulate_dataset(np.random.default_rng(5), plan)
        b, _ = simulate_dataset(np.random.default_rng(5), plan)
        np.testing.assert_array_equal(a.z, b.z)
        assert a.content_hash() == b.content_hash()

    def test_shared_stream_across_mixing(self):
        g = gaussian_study_plan(n_sites=8, J=12)
        ng = nongaussian_study_plan(n_sites=8, J=12)
        a, ta = simulate_dataset(np.random.default_rng(7), g)
        b, tb = simulate_dataset(np.random.default_rng(7), ng)
        np.testing.assert_array_equal(ta["theta"], tb["theta"])
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.sites.coords, b.sites.coords)

    def test_truth_finite_and_shapes(self):
        plan = nongaussian_study_plan(n_sites=9, J=15, n_holdout=2)
        data, truth = simulate_dataset(np.random.default_rng(2), plan)
        assert data.z.shape == (15, 9)
        assert truth["theta"].shape == (16, 5)
        assert truth["log_lam1"].shape == (9,) and truth["log_lam2"].shape == (15,)
        assert data.X2.shape == (15, 2)
        for key in ("theta", "eta", "log_lam1", "log_lam2"):
            assert np.all(np.isfinite(truth[key]))

    def test_shift_enters_temporal_mixing(self):
        plan = nongaussian_study_plan(n_sites=6, J=40, nu2=1e-10)
        _, truth = simulate_dataset(np.random.default_rng(3), plan)
        np.testing.assert_allclose(truth["log_lam2"], nongaussian_mean_shift(np.arange(1, 41), 40), atol=1e-4)

    def test_separable_reconstruction(self):
        # rebuild z from the truth record with a different code path
        statics = StaticParams(sigma2=0.0, tau2=0.0, phi=0.3, alpha=1.0, gamma=0.2, nu1=0.5, nu2=0.5)
        plan = nongaussian_study_plan(n_sites=6, J=5, statics=statics)
        plan.statics.sigma2 = 0.0
        data, truth = simulate_dataset(np.random.default_rng(4), plan)
        mean = np.stack([data.X[t] @ truth["theta"][t + 1] for t in range(5)])
        np.testing.assert_allclose(data.z, mean, atol=1e-14)
        cov = stacked_obs_cov(StaticParams(sigma2=1.0, tau2=0.0, phi=0.3, alpha=1.0), data.sites,
                              truth["log_lam1"][None, :] + truth["log_lam2"][:, None])
        lam = np.exp(truth["log_lam1"][None, :] + truth["log_lam2"][:, None])
        np.testing.assert_allclose(np.diagonal(cov, axis1=1, axis2=2), 1.0 / lam, rtol=1e-12)


class TestMoments:
    def test_closed_forms(self):
        assert variance_closed_form(2.0, 0.0, 0.0) == 2.0
        assert kurtosis_closed_form(0.3, 0.2) == pytest.approx(4.9462, abs=1e-4)
        assert correlation_exact(0.6, 1.0, 0.5) == pytest.approx(0.6)
        assert correlation_extra_factor(0.6, 0.5, 0.3, 0.2) < correlation_exact(0.6, 0.5, 0.3)

    def test_nugget_rejected(self):
        with pytest.raises(PreconditionError):
            check_conditional_moments(np.random.default_rng(0), MomentPlan(tau2=0.1), 100)

    def test_small_run_report(self):
        rep = check_conditional_moments(np.random.default_rng(1), MomentPlan(), 200_000)
        assert rep["var_ok"]
        assert rep["corr_match"] == "exact"
        assert rep["var_closed_form"] == pytest.approx(np.exp(0.5))

    def test_regression_offsets(self):
        plan = MomentPlan(reg1=(0.4, -0.2), reg2=0.3)
        rep = check_conditional_moments(np.random.default_rng(2), plan, 200_000)
        assert rep["var_closed_form"] == pytest.approx(np.exp(0.5 - 0.4 - 0.3))
        assert rep["var_ok"]
