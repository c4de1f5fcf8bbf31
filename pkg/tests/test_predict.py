import dataclasses

import numpy as np
import pytest

from dynglg.errors import NumericalDefinitenessError, PreconditionError, TaskSpecificationError
from dynglg.model import ModelSpec
from dynglg.predict import (
    PredictionTask,
    PredictiveDraws,
    forecast_time,
    holdout_task,
    interpolate_space,
    lambda1_conditional,
    predictive_summary,
)
from dynglg.sampler import run_chain
from dynglg.simulate import nongaussian_study_plan, simulate_dataset
from dynglg.spatial_cov import CorrelationKernel, SiteSet, corr_matrix
from oracles import gaussian_condition


@pytest.fixture(scope="module")
def small():
    plan = nongaussian_study_plan(n_sites=7, J=10, n_holdout=2)
    full, truth = simulate_dataset(np.random.default_rng(11), plan)
    train = full.subset(truth["train"])
    return full, train, truth


@pytest.fixture(scope="module")
def chains(small):
    _, train, _ = small
    out = {}
    for v in ("G", "DynGLG", "CovDynGLG", "Full"):
        out[v] = run_chain(3, train, ModelSpec(variant=v), iters=40, burnin=20, thin=4)
    return out


def dense_joint_cov(s, sites, log_lam):
    """Observation covariance of ``sites`` at one time, built entry by entry."""
    n = sites.n
    S = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            d = np.hypot(*(sites.coords[i] - sites.coords[j]))
            c = 1.0 / (1.0 + (d / s["phi"]) ** s["alpha"])
            S[i, j] = s["sigma2"] * c / np.sqrt(np.exp(log_lam[i] + log_lam[j])) + s["tau2"] * (i == j)
    return S


def check_against_dense(post, train, full, truth, draws, k_list):
    task_idx = truth["holdout"]
    both = SiteSet(np.vstack([train.sites.coords, full.sites.coords[task_idx]]))
    n, d = train.n, len(task_idx)
    for r in k_list:
        k = r
        s = {nm: float(v[k]) for nm, v in post.statics.items()}
        theta = post.theta[k, 1:]
        for t in (0, train.J // 2, train.J - 1):
            ll = np.concatenate([post.log_lam1[k], draws.log_lam1[r]]) + post.log_lam2[k, t]
            S = dense_joint_cov(s, both, ll)
            mu = np.concatenate([train.X[t] @ theta[t], full.X[t][task_idx] @ theta[t]])
            cm, cc = gaussian_condition(mu, S, np.arange(n), train.z[t])
            np.testing.assert_allclose(draws.mean[r, t], cm, atol=1e-8, rtol=1e-8)
            np.testing.assert_allclose(draws.cov[r, t], cc, atol=1e-8, rtol=1e-8)
    assert d == draws.z.shape[2]


class TestLambda1Conditional:
    def test_dense_oracle_with_offset(self):
        rng = np.random.default_rng(0)
        sites_o = SiteSet(rng.uniform(size=(6, 2)))
        sites_p = SiteSet(rng.uniform(size=(3, 2)))
        F_o, F_p = rng.normal(size=(6, 2)), rng.normal(size=(3, 2))
        beta = np.array([0.4, -0.7])
        nu1, gamma = 0.8, 0.3
        kern = CorrelationKernel.exponential(gamma)
        allsites = SiteSet(np.vstack([sites_o.coords, sites_p.coords]))
        C = corr_matrix(allsites, kern)
        mu = -nu1 / 2 + np.concatenate([F_o, F_p]) @ beta
        obs = rng.normal(size=6)
        cm, cc = gaussian_condition(mu, nu1 * C, np.arange(6), obs)
        m, c = lambda1_conditional(obs, nu1, beta, kern, sites_o, sites_p, F_o, F_p)
        np.testing.assert_allclose(m, cm, atol=1e-10)
        np.testing.assert_allclose(c, cc, atol=1e-10)

    def test_without_covariates_reverts_to_unit_mean(self):
        rng = np.random.default_rng(1)
        sites_o = SiteSet(rng.uniform(size=(4, 2)))
        far = SiteSet(np.array([[1e6, 1e6]]))
        m, c = lambda1_conditional(rng.normal(size=4), 0.5, np.zeros(0), CorrelationKernel.exponential(0.1),
                                   sites_o, far)
        assert m[0] == pytest.approx(-0.25, abs=1e-12)
        assert c[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_singular_observed_block(self):
        sites_o = SiteSet(np.array([[0.0, 0.0], [1e-300, 0.0]]))
        with pytest.raises(NumericalDefinitenessError):
            lambda1_conditional(np.zeros(2), 0.5, np.zeros(0), CorrelationKernel.exponential(1e6),
                                sites_o, SiteSet(np.array([[1.0, 1.0]])))


class TestInterpolateSpace:
    def test_gaussian_variant_is_kriging(self, small, chains):
        full, train, truth = small
        post = chains["G"]
        task = holdout_task(full, truth["holdout"])
        draws = interpolate_space(np.random.default_rng(0), post, train, task)
        assert np.all(draws.log_lam1 == 0.0)
        check_against_dense(post, train, full, truth, draws, range(post.n_draws))

    def test_glg_variant_conditions_jointly(self, small, chains):
        full, train, truth = small
        post = chains["DynGLG"]
        task = holdout_task(full, truth["holdout"])
        draws = interpolate_space(np.random.default_rng(0), post, train, task)
        assert draws.z.shape == (post.n_draws, train.J, 2)
        check_against_dense(post, train, full, truth, draws, range(post.n_draws))

    def test_full_variant_needs_target_covariates(self, small, chains):
        full, train, truth = small
        task = holdout_task(full, truth["holdout"])
        draws = interpolate_space(np.random.default_rng(0), chains["Full"], train, task)
        assert np.all(np.isfinite(draws.z))
        bare = dataclasses.replace(task, X1=None)
        with pytest.raises(TaskSpecificationError):
            interpolate_space(np.random.default_rng(0), chains["Full"], train, bare)

    @staticmethod
    def _near_site_deviation(post, train, offset, src=3):
        coords = train.sites.coords[src][None, :] + np.array([[offset, 0.0]])
        task = PredictionTask(target_ids=["near"], target_sites=SiteSet(coords), X=train.X[:, [src], :])
        draws = interpolate_space(np.random.default_rng(0), post, train, task)
        return np.max(np.abs(draws.z[:, :, 0] - train.z[None, :, src]))

    @staticmethod
    def _with_statics(post, **values):
        statics = {k: v.copy() for k, v in post.statics.items()}
        for k, v in values.items():
            statics[k][:] = v
        return dataclasses.replace(post, statics=statics)

    def test_exact_at_observed_site(self, small, chains):
        # smooth kernel, no mixing: deviation scales like (d / phi)^(alpha / 2)
        _, train, _ = small
        post = self._with_statics(chains["G"], tau2=0.0, alpha=2.0)
        assert self._near_site_deviation(post, train, 1e-8) < 1e-4

    def test_converges_to_observed_site_with_mixing(self, small, chains):
        # the exponential kernel of ln(lambda1) makes the deviation O(sqrt(d))
        _, train, truth = small
        post = self._with_statics(chains["DynGLG"], sigma2=1.0, tau2=0.0, phi=0.25, alpha=1.0, gamma=0.3,
                                  nu1=0.6, nu2=0.6)
        K = post.n_draws
        post.log_lam1 = np.tile(truth["log_lam1"][truth["train"]], (K, 1))
        post.log_lam2 = np.tile(truth["log_lam2"], (K, 1))
        devs = [self._near_site_deviation(post, train, d) for d in (1e-6, 1e-8, 1e-10, 1e-12, 1e-14)]
        assert np.all(np.diff(devs) < 0)
        assert devs[-1] < 1e-4

    def test_draws_per_sample(self, small, chains):
        full, train, truth = small
        task = holdout_task(full, truth["holdout"], draws_per_sample=3)
        draws = interpolate_space(np.random.default_rng(0), chains["G"], train, task)
        assert draws.n_draws == 3 * chains["G"].n_draws
        np.testing.assert_array_equal(draws.mean[0], draws.mean[1])
        assert not np.array_equal(draws.z[0], draws.z[1])

    def test_deterministic(self, small, chains):
        full, train, truth = small
        task = holdout_task(full, truth["holdout"])
        a = interpolate_space(np.random.default_rng(5), chains["DynGLG"], train, task)
        b = interpolate_space(np.random.default_rng(5), chains["DynGLG"], train, task)
        np.testing.assert_array_equal(a.z, b.z)

    def test_rejects_other_data(self, small, chains):
        full, train, truth = small
        task = holdout_task(full, truth["holdout"])
        with pytest.raises(PreconditionError):
            interpolate_space(np.random.default_rng(0), chains["G"], full, task)

    def test_rejects_wrong_time_span(self, small, chains):
        full, train, truth = small
        task = PredictionTask(target_ids=["a"], target_sites=full.sites.subset([0]), X=full.X[:3, [0], :])
        with pytest.raises(TaskSpecificationError):
            interpolate_space(np.random.default_rng(0), chains["G"], train, task)


def forecast_task(full, idx, h, X2=None, per=1):
    X = np.repeat(full.X[-1:, idx, :], h, axis=0)
    return PredictionTask(target_ids=[full.site_ids[i] for i in idx], target_sites=full.sites.subset(idx), X=X,
                          horizon=h, X2=X2, draws_per_sample=per)


class TestForecast:
    def test_shapes_and_times(self, small, chains):
        _, train, _ = small
        task = forecast_task(train, [0, 1, 2], 4)
        draws = forecast_time(np.random.default_rng(0), chains["DynGLG"], train, task)
        assert draws.z.shape == (chains["DynGLG"].n_draws, 4, 3)
        assert draws.times == [train.times[-1] + i for i in range(1, 5)]
        assert draws.eta.shape[1] == 4

    def test_uncertainty_grows_with_horizon(self, small, chains):
        _, train, _ = small
        post = chains["G"]
        task = forecast_task(train, [0], 12, per=300)
        draws = forecast_time(np.random.default_rng(1), post, train, task)
        spread = draws.theta.reshape(post.n_draws, 300, 12, -1).var(axis=1).sum(axis=-1).mean(axis=0)
        assert spread[-1] > spread[0]
        assert np.all(np.diff(spread[::3]) > 0)

    def test_conditional_moments_match_latents(self, small, chains):
        _, train, _ = small
        post = chains["DynGLG"]
        task = forecast_task(train, [0, 4], 2)
        draws = forecast_time(np.random.default_rng(2), post, train, task)
        for r in range(draws.n_draws):
            s = {nm: float(v[r]) for nm, v in post.statics.items()}
            for t in range(2):
                ll = post.log_lam1[r][[0, 4]] + draws.log_lam2[r, t]
                S = dense_joint_cov(s, train.sites.subset([0, 4]), ll)
                np.testing.assert_allclose(draws.cov[r, t], S, rtol=1e-10, atol=1e-12)
                np.testing.assert_allclose(draws.mean[r, t], task.X[t] @ draws.theta[r, t], atol=1e-12)

    def test_covariate_variant_requires_future_x2(self, small, chains):
        _, train, _ = small
        with pytest.raises(TaskSpecificationError):
            forecast_time(np.random.default_rng(0), chains["CovDynGLG"], train, forecast_task(train, [0], 2))
        X2 = np.zeros((2, train.X2.shape[1]))
        draws = forecast_time(np.random.default_rng(0), chains["CovDynGLG"], train, forecast_task(train, [0], 2, X2))
        assert np.all(np.isfinite(draws.z))

    def test_needs_positive_horizon(self, small, chains):
        _, train, _ = small
        task = PredictionTask(target_ids=["a"], target_sites=train.sites.subset([0]), X=train.X[:, [0], :])
        with pytest.raises(TaskSpecificationError):
            forecast_time(np.random.default_rng(0), chains["G"], train, task)


class TestTaskValidation:
    def test_forecast_needs_all_future_covariates(self):
        with pytest.raises(TaskSpecificationError):
            PredictionTask(target_ids=["a"], target_sites=SiteSet([[0.0, 0.0]]), X=np.ones((2, 1, 1)), horizon=3)

    def test_nonfinite_design(self):
        X = np.ones((2, 1, 1))
        X[0, 0, 0] = np.nan
        with pytest.raises(TaskSpecificationError):
            PredictionTask(target_ids=["a"], target_sites=SiteSet([[0.0, 0.0]]), X=X)

    def test_ids_must_match(self):
        with pytest.raises(TaskSpecificationError):
            PredictionTask(target_ids=["a", "b"], target_sites=SiteSet([[0.0, 0.0]]), X=np.ones((2, 1, 1)))

    def test_negative_horizon(self):
        with pytest.raises(TaskSpecificationError):
            PredictionTask(target_ids=["a"], target_sites=SiteSet([[0.0, 0.0]]), X=np.ones((2, 1, 1)), horizon=-1)


class TestSummary:
    def test_constant_draws(self):
        s = predictive_summary(np.full((200, 2, 3), 1.5))
        assert np.all(s["mean"] == 1.5) and np.all(s["sd"] == 0.0)
        assert np.all(s["lower"] == 1.5) and np.all(s["upper"] == 1.5)

    def test_normal_quantiles(self):
        z = np.random.default_rng(0).standard_normal((100_000, 1, 1))
        s = predictive_summary(z, 0.05)
        assert abs(s["lower"][0, 0] + 1.96) < 0.05 and abs(s["upper"][0, 0] - 1.96) < 0.05

    def test_negation_symmetry(self):
        z = np.random.default_rng(1).normal(size=(500, 2, 2))
        a, b = predictive_summary(z), predictive_summary(-z)
        np.testing.assert_allclose(b["mean"], -a["mean"], atol=1e-14)
        np.testing.assert_allclose(b["lower"], -a["upper"], atol=1e-12)
        np.testing.assert_allclose(b["upper"], -a["lower"], atol=1e-12)

    def test_few_draws_warn(self):
        with pytest.warns(RuntimeWarning):
            predictive_summary(np.zeros((10, 1, 1)))

    def test_accepts_predictive_draws(self):
        z = np.random.default_rng(2).normal(size=(150, 1, 2))
        pd = PredictiveDraws(z=z, mean=z, cov=np.zeros((150, 1, 2, 2)), log_lam1=np.zeros((150, 2)),
                             log_lam2=np.zeros((150, 1)), theta=None, eta=None, site_ids=["a", "b"], times=[1])
        np.testing.assert_array_equal(predictive_summary(pd)["mean"], z.mean(axis=0))

    def test_nonfinite_draws_rejected(self):
        with pytest.raises(NumericalDefinitenessError):
            PredictiveDraws(z=np.full((1, 1, 1), np.nan), mean=np.zeros((1, 1, 1)), cov=np.zeros((1, 1, 1, 1)),
                            log_lam1=np.zeros((1, 1)), log_lam2=np.zeros((1, 1)), theta=None, eta=None,
                            site_ids=["a"], times=[1])
