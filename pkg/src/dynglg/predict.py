"""Posterior predictive draws at ungauged sites and future times.

Each posterior draw is pushed through the observation model once (or
``draws_per_sample`` times): latent mixing values at the targets are drawn
first, then the responses from their conditional Gaussian. The per-draw
conditional means and covariances are kept alongside the draws because the
log predictive score averages those Gaussians directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve

from .dataset import SpatioTemporalDataset
from .errors import NumericalDefinitenessError, PreconditionError, TaskSpecificationError
from .model import Variant
from .sampler import PosteriorSamples, variance_designs
from .spatial_cov import CorrelationKernel, SiteSet, corr_matrix, cross_corr, distance_matrix
from .state_space import propagate_states

MIN_SUMMARY_DRAWS = 100


@dataclass
class PredictionTask:
    """What to predict and the designs needed to do it.

    ``X`` holds mean-design rows at the targets, shape ``(T, d, p)``: ``T``
    is the number of training times for interpolation (``horizon == 0``)
    or ``horizon`` for forecasting. ``X1`` gives spatial-variance
    covariates at the targets ``(d, p1)``; ``X2`` the temporal-variance
    covariates for the future times ``(horizon, p2)``, no intercept.
    """

    target_ids: list
    target_sites: SiteSet
    X: np.ndarray
    horizon: int = 0
    X1: Optional[np.ndarray] = None
    X2: Optional[np.ndarray] = None
    draws_per_sample: int = 1

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.horizon < 0:
            raise TaskSpecificationError("horizon must be >= 0")
        d = self.target_sites.n
        if self.horizon == 0 and d == 0:
            raise TaskSpecificationError("interpolation needs at least one target site")
        if len(self.target_ids) != d:
            raise TaskSpecificationError("target ids do not match target sites")
        if self.X.ndim != 3 or self.X.shape[1] != d:
            raise TaskSpecificationError(f"target design has shape {self.X.shape}, expected (T, {d}, p)")
        if self.horizon > 0 and self.X.shape[0] != self.horizon:
            raise TaskSpecificationError(
                f"forecast needs mean covariates for all {self.horizon} future times, got {self.X.shape[0]}"
            )
        if not np.all(np.isfinite(self.X)):
            raise TaskSpecificationError("target design is not finite")
        if self.draws_per_sample < 1:
            raise TaskSpecificationError("draws_per_sample must be >= 1")

    @property
    def n_targets(self) -> int:
        return self.target_sites.n


@dataclass
class PredictiveDraws:
    """Predictive simulations with their per-draw conditional moments.

    ``z`` and ``mean`` are ``(R, T, d)`` and ``cov`` is ``(R, T, d, d)``
    where ``R`` is posterior draws times ``draws_per_sample``.
    """

    z: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    log_lam1: np.ndarray
    log_lam2: np.ndarray
    theta: np.ndarray
    eta: Optional[np.ndarray]
    site_ids: list
    times: list

    def __post_init__(self):
        if not np.all(np.isfinite(self.z)):
            raise NumericalDefinitenessError("predictive draws are not finite")

    @property
    def n_draws(self) -> int:
        return self.z.shape[0]


def _psd_draw(rng, mean, cov):
    """Gaussian draw(s) tolerant of singular covariances.

    ``cov`` may be stacked ``(..., d, d)``. Directions with non-positive
    eigenvalues get no noise, so a zero covariance returns ``mean`` exactly.
    """
    w, V = np.linalg.eigh(cov)
    scale = np.max(np.abs(w), axis=-1, keepdims=True)
    w = np.where(w > 1e-12 * np.maximum(scale, 1e-300), w, 0.0)
    eps = rng.standard_normal(np.shape(mean))
    noise = np.einsum("...ij,...j->...i", V, np.sqrt(w) * eps)
    return np.where(np.all(w == 0, axis=-1, keepdims=True), mean, mean + noise)


def lambda1_conditional(log_lam1_obs, nu1, beta, kernel: CorrelationKernel, sites_obs: SiteSet,
                        sites_pred: SiteSet, F1_obs=None, F1_pred=None):
    """Moments of ``ln(lambda1)`` at new sites given the observed-site values.

    ``F1_obs`` (``n x p1``) and ``F1_pred`` (``d x p1``) are the spatial
    variance covariates; the regression offset enters both the centring of
    the observed values and the target mean.
    """
    log_lam1_obs = np.asarray(log_lam1_obs, dtype=float)
    reg_o = np.zeros(sites_obs.n) if F1_obs is None else np.asarray(F1_obs) @ np.asarray(beta)
    reg_p = np.zeros(sites_pred.n) if F1_pred is None else np.asarray(F1_pred) @ np.asarray(beta)
    Coo = corr_matrix(sites_obs, kernel, check=False)
    Cpo = cross_corr(sites_pred, sites_obs, kernel)
    Cpp = corr_matrix(sites_pred, kernel, check=False)
    try:
        L = np.linalg.cholesky(Coo)
    except np.linalg.LinAlgError:
        eig = float(np.linalg.eigvalsh(Coo)[0])
        raise NumericalDefinitenessError("observed-site correlation is singular", eig) from None
    a = log_lam1_obs + 0.5 * nu1 - reg_o
    K = cho_solve((L, True), Cpo.T).T
    mean = -0.5 * nu1 + reg_p + K @ a
    cov = nu1 * (Cpp - K @ Cpo.T)
    return mean, 0.5 * (cov + cov.T)


def interpolate_lambda1(rng, log_lam1_obs, nu1, beta, kernel: CorrelationKernel, sites_obs: SiteSet,
                        sites_pred: SiteSet, F1_obs=None, F1_pred=None) -> np.ndarray:
    """One draw of ``ln(lambda1)`` at ``sites_pred`` from its conditional Gaussian."""
    mean, cov = lambda1_conditional(log_lam1_obs, nu1, beta, kernel, sites_obs, sites_pred, F1_obs, F1_pred)
    return _psd_draw(rng, mean, cov)


def _target_lambda1(rng, variant: Variant, post: PosteriorSamples, k, sites_obs, task, X1_obs):
    if variant.lambda1 == "none":
        return np.zeros(task.n_targets)
    if variant.lambda1 == "st":
        return np.full(task.n_targets, post.log_lam1[k, 0])
    gamma = float(post.statics["gamma"][k])
    nu1 = float(post.statics["nu1"][k])
    F1o = F1p = None
    beta = post.beta[k]
    if variant.spatial_covariates:
        if task.X1 is None:
            raise TaskSpecificationError("variant needs spatial-variance covariates at the targets")
        F1o, F1p = X1_obs, np.asarray(task.X1, dtype=float).reshape(task.n_targets, -1)
    # gauged targets keep their sampled value; only the others are interpolated
    dist = distance_matrix(task.target_sites.coords, sites_obs.coords)
    gauged = dist.min(axis=1) == 0.0
    out = np.empty(task.n_targets)
    out[gauged] = post.log_lam1[k, dist[gauged].argmin(axis=1)]
    free = np.flatnonzero(~gauged)
    if free.size:
        out[free] = interpolate_lambda1(rng, post.log_lam1[k], nu1, beta, CorrelationKernel.exponential(gamma),
                                        sites_obs, task.target_sites.subset(free), F1o,
                                        None if F1p is None else F1p[free])
    return out


def _check_data(post: PosteriorSamples, data: SpatioTemporalDataset):
    if post.data_hash != data.content_hash():
        raise PreconditionError("posterior samples were fitted to different data")


def _joint_blocks(sigma2, tau2, Coo, Cpo, Cpp, log_lam_o, log_lam_p):
    """Stacked covariance blocks of the (observed, target) response vectors.

    ``log_lam_o`` is ``(T, n)`` and ``log_lam_p`` is ``(T, d)``.
    """
    so = np.exp(-0.5 * log_lam_o)
    sp = np.exp(-0.5 * log_lam_p)
    Soo = sigma2 * so[:, :, None] * Coo[None] * so[:, None, :]
    Soo[:, np.arange(Coo.shape[0]), np.arange(Coo.shape[0])] += tau2
    Spo = sigma2 * sp[:, :, None] * Cpo[None] * so[:, None, :]
    Spp = sigma2 * sp[:, :, None] * Cpp[None] * sp[:, None, :]
    Spp[:, np.arange(Cpp.shape[0]), np.arange(Cpp.shape[0])] += tau2
    return Soo, Spo, Spp


def interpolate_space(rng, post: PosteriorSamples, data: SpatioTemporalDataset, task: PredictionTask) -> PredictiveDraws:
    """Predict responses at target sites over the training times.

    For each posterior draw: ``ln(lambda1)`` at the targets from its
    conditional Gaussian given the observed-site values, then at every
    time the target responses from the joint Gaussian of observed and
    target responses, conditioned on the observed ones.
    """
    _check_data(post, data)
    if task.horizon != 0:
        raise TaskSpecificationError("interpolation works on the training times (horizon 0)")
    if task.X.shape[0] != data.J:
        raise TaskSpecificationError(f"target design covers {task.X.shape[0]} times, data has {data.J}")
    variant = post.model_spec().flags
    J, d = data.J, task.n_targets
    X1_obs = data.X1
    dist_po = distance_matrix(task.target_sites.coords, data.sites.coords)
    M = task.draws_per_sample
    R = post.n_draws * M
    out_z = np.empty((R, J, d))
    out_mean = np.empty((R, J, d))
    out_cov = np.empty((R, J, d, d))
    out_l1 = np.empty((R, d))
    out_theta = np.empty((R, J, data.p))
    for r in range(R):
        k = r // M
        s = {nm: float(v[k]) for nm, v in post.statics.items()}
        kern = CorrelationKernel.cauchy(s["phi"], s["alpha"])
        Coo = corr_matrix(data.sites, kern, check=False)
        Cpo = kern(dist_po)
        Cpp = corr_matrix(task.target_sites, kern, check=False)
        l1p = _target_lambda1(rng, variant, post, k, data.sites, task, X1_obs)
        l2 = post.log_lam2[k]
        theta = post.theta[k, 1:]
        Soo, Spo, Spp = _joint_blocks(
            s["sigma2"], s["tau2"], Coo, Cpo, Cpp,
            post.log_lam1[k][None, :] + l2[:, None], l1p[None, :] + l2[:, None],
        )
        mu_o = np.einsum("tip,tp->ti", data.X, theta)
        mu_p = np.einsum("tip,tp->ti", task.X, theta)
        try:
            gain = np.linalg.solve(Soo, Spo.transpose(0, 2, 1)).transpose(0, 2, 1)
        except np.linalg.LinAlgError:
            raise NumericalDefinitenessError("observed-site covariance is singular") from None
        mean = mu_p + np.einsum("tij,tj->ti", gain, data.z - mu_o)
        cov = Spp - np.einsum("tij,tkj->tik", gain, Spo)
        cov = 0.5 * (cov + cov.transpose(0, 2, 1))
        out_z[r] = _psd_draw(rng, mean, cov)
        out_mean[r], out_cov[r], out_l1[r], out_theta[r] = mean, cov, l1p, theta
    return PredictiveDraws(
        z=out_z, mean=out_mean, cov=out_cov, log_lam1=out_l1, log_lam2=np.repeat(post.log_lam2, M, axis=0),
        theta=out_theta, eta=None, site_ids=list(task.target_ids), times=list(data.times),
    )


def forecast_time(rng, post: PosteriorSamples, data: SpatioTemporalDataset, task: PredictionTask) -> PredictiveDraws:
    """Forecast responses ``horizon`` steps past the last training time.

    Per posterior draw: mean and variance states evolve from their values
    at the last time with the stored one-step-ahead evolution covariances;
    ``ln(lambda2)`` is drawn around ``F2' eta - nu2/2`` with variance
    ``nu2``; targets that are not gauged get interpolated ``ln(lambda1)``.
    Future responses are independent of the past given these latents.
    """
    _check_data(post, data)
    h = task.horizon
    if h < 1:
        raise TaskSpecificationError("forecasting needs horizon >= 1")
    variant = post.model_spec().flags
    spec = post.model_spec()
    d = task.n_targets
    p = data.p
    G = np.eye(p) if spec.G is None else np.asarray(spec.G, dtype=float)
    F2_future = None
    if variant.dynamic:
        if variant.temporal_covariates:
            if task.X2 is None:
                raise TaskSpecificationError("missing future temporal-variance covariates")
            X2 = np.asarray(task.X2, dtype=float).reshape(h, -1)
            if X2.shape[0] != h or not np.all(np.isfinite(X2)):
                raise TaskSpecificationError(f"temporal-variance covariates must cover all {h} future times")
            F2_future = np.hstack([np.ones((h, 1)), X2])
        else:
            F2_future = np.ones((h, 1))
        _, F2_obs = variance_designs(data, variant)
        if F2_future.shape[1] != F2_obs.shape[1]:
            raise TaskSpecificationError("future temporal-variance design has the wrong width")
        p2 = F2_future.shape[1]
        G2 = np.eye(p2) if spec.G2 is None else np.asarray(spec.G2, dtype=float)

    M = task.draws_per_sample
    R = post.n_draws * M
    out_z = np.empty((R, h, d))
    out_mean = np.empty((R, h, d))
    out_cov = np.empty((R, h, d, d))
    out_l1 = np.empty((R, d))
    out_l2 = np.empty((R, h))
    out_theta = np.empty((R, h, p))
    out_eta = np.empty((R, h, F2_future.shape[1])) if variant.dynamic else None
    for r in range(R):
        k = r // M
        s = {nm: float(v[k]) for nm, v in post.statics.items()}
        theta = propagate_states(rng, post.theta[k, -1], G, post.W_theta_next[k], h)
        l2 = np.zeros(h)
        if variant.dynamic:
            eta = propagate_states(rng, post.eta[k, -1], G2, post.W_eta_next[k], h)
            nu2 = s["nu2"]
            l2 = np.einsum("tp,tp->t", F2_future, eta) - 0.5 * nu2 + np.sqrt(nu2) * rng.standard_normal(h)
            out_eta[r] = eta
        l1p = _target_lambda1(rng, variant, post, k, data.sites, task, data.X1)
        kern = CorrelationKernel.cauchy(s["phi"], s["alpha"])
        Cpp = corr_matrix(task.target_sites, kern, check=False)
        sp = np.exp(-0.5 * (l1p[None, :] + l2[:, None]))
        cov = s["sigma2"] * sp[:, :, None] * Cpp[None] * sp[:, None, :]
        cov[:, np.arange(d), np.arange(d)] += s["tau2"]
        mean = np.einsum("tip,tp->ti", task.X, theta)
        out_z[r] = _psd_draw(rng, mean, cov)
        out_mean[r], out_cov[r], out_l1[r], out_l2[r], out_theta[r] = mean, cov, l1p, l2, theta
    last = data.times[-1]
    times = [last + i for i in range(1, h + 1)] if isinstance(last, (int, np.integer)) else [f"+{i}" for i in range(1, h + 1)]
    return PredictiveDraws(
        z=out_z, mean=out_mean, cov=out_cov, log_lam1=out_l1, log_lam2=out_l2, theta=out_theta, eta=out_eta,
        site_ids=list(task.target_ids), times=times,
    )


def predictive_summary(draws, level: float = 0.05) -> dict:
    """Per-(time, site) mean, sd and ``level/2``, ``1 - level/2`` quantiles.

    ``draws`` is a :class:`PredictiveDraws` or an array with draws on the
    first axis. Fewer than 100 draws triggers a precision warning.
    """
    z = draws.z if isinstance(draws, PredictiveDraws) else np.asarray(draws, dtype=float)
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if z.shape[0] < MIN_SUMMARY_DRAWS:
        warnings.warn(f"only {z.shape[0]} predictive draws; quantiles are imprecise", RuntimeWarning, stacklevel=2)
    lo, hi = np.quantile(z, [0.5 * level, 1.0 - 0.5 * level], axis=0)
    return {
        "mean": z.mean(axis=0),
        "sd": z.std(axis=0, ddof=1) if z.shape[0] > 1 else np.zeros(z.shape[1:]),
        "lower": lo,
        "upper": hi,
        "level": level,
    }


def holdout_task(full: SpatioTemporalDataset, holdout_idx, draws_per_sample: int = 1) -> PredictionTask:
    """Interpolation task for the held-out sites of a dataset containing all sites."""
    idx = np.asarray(holdout_idx, dtype=int)
    return PredictionTask(
        target_ids=[full.site_ids[i] for i in idx],
        target_sites=full.sites.subset(idx),
        X=full.X[:, idx, :],
        X1=None if full.X1 is None else full.X1[idx],
        draws_per_sample=draws_per_sample,
    )
