"""Full-conditional updates for the mixing latents and the variance regression.

All positive latents live on the log scale. The random-walk proposals
are symmetric there, so acceptance ratios are plain differences of the
log targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import cho_solve

from .errors import DesignRankError, ParameterDomainError
from .spatial_cov import LOG_2PI, chol_batch, mvn_chol, mvn_logpdf_batch, obs_cov_batch


@dataclass
class MixingState:
    """Mixing latents, stored as logs of the positive quantities."""

    log_lam1: np.ndarray
    log_lam2: np.ndarray
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nu1: float = 0.5
    nu2: float = 0.5

    @property
    def lambda1(self) -> np.ndarray:
        return np.exp(self.log_lam1)

    @property
    def lambda2(self) -> np.ndarray:
        return np.exp(self.log_lam2)

    def copy(self) -> "MixingState":
        return MixingState(self.log_lam1.copy(), self.log_lam2.copy(), np.array(self.beta), self.nu1, self.nu2)


@dataclass
class ObsTerms:
    """Observational factors given the mean states.

    ``resid`` is ``z_t - F_t' theta_t`` stacked as ``(J, n)``.
    """

    resid: np.ndarray
    sigma2: float
    tau2: float
    corr: np.ndarray

    def per_time(self, log_lam1, log_lam2) -> np.ndarray:
        """Log density of each time's residual vector, shape ``(J,)``."""
        log_lam = np.asarray(log_lam1)[None, :] + np.asarray(log_lam2)[:, None]
        S = obs_cov_batch(self.sigma2, self.tau2, self.corr, log_lam)
        return mvn_logpdf_batch(self.resid, chol_batch(S))

    def total(self, log_lam1, log_lam2) -> float:
        return float(np.sum(self.per_time(log_lam1, log_lam2)))


@dataclass
class SpatialMixingPrior:
    """``ln(lambda1) ~ N(-nu1/2 + F1' beta, nu1 C_xi)``."""

    nu1: float
    corr_xi: np.ndarray
    regression: np.ndarray = None

    def __post_init__(self):
        n = self.corr_xi.shape[0]
        if self.regression is None:
            self.regression = np.zeros(n)
        self._chol = mvn_chol(self.corr_xi)
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))

    def deviation(self, log_lam1):
        return np.asarray(log_lam1) + 0.5 * self.nu1 - self.regression

    def logpdf(self, log_lam1) -> float:
        delta = self.deviation(log_lam1)
        n = delta.size
        q = delta @ cho_solve((self._chol, True), delta)
        return float(-0.5 * n * (LOG_2PI + np.log(self.nu1)) - 0.5 * self._logdet - 0.5 * q / self.nu1)


def lambda1_logtarget(lam1, obs: ObsTerms, log_lam2, prior: SpatialMixingPrior, likelihood=True) -> float:
    """Unnormalized log full conditional of ``ln(lambda1)``.

    ``lam1`` is on the natural (positive) scale. The prior is stated for
    ``ln(lambda1)``, so the result is a density in that parameterization and
    carries no Jacobian.
    """
    lam1 = np.asarray(lam1, dtype=float)
    if np.any(~(lam1 > 0)):
        raise ParameterDomainError("lambda1 entries must be strictly positive")
    log_lam1 = np.log(lam1)
    out = prior.logpdf(log_lam1)
    if likelihood:
        out += obs.total(log_lam1, log_lam2)
    return out


def _blocks(n, size):
    return [np.arange(i, min(i + size, n)) for i in range(0, n, size)]


def sample_lambda1(rng, log_lam1, steps, obs: ObsTerms, log_lam2, prior: SpatialMixingPrior,
                   block_size=1, likelihood=True):
    """One Metropolis sweep over ``ln(lambda1)`` in contiguous blocks.

    ``steps`` holds one random-walk scale per block (or a scalar).

    Returns
    -------
    log_lam1 : ndarray
        Updated values.
    accepted : ndarray of bool
        One flag per block.
    """
    cur = np.array(log_lam1, dtype=float)
    blocks = _blocks(cur.size, block_size)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), (len(blocks),))
    accepted = np.zeros(len(blocks), dtype=bool)
    cur_target = prior.logpdf(cur) + (obs.total(cur, log_lam2) if likelihood else 0.0)
    for b, idx in enumerate(blocks):
        z = rng.standard_normal(idx.size)
        u = np.log(rng.uniform())
        if steps[b] == 0.0:
            accepted[b] = True
            continue
        prop = cur.copy()
        prop[idx] += steps[b] * z
        prop_target = prior.logpdf(prop) + (obs.total(prop, log_lam2) if likelihood else 0.0)
        if u < prop_target - cur_target:
            cur, cur_target = prop, prop_target
            accepted[b] = True
    return cur, accepted


def lambda2_logtarget_terms(log_lam2, obs: ObsTerms, log_lam1, eta_mean, nu2, likelihood=True) -> np.ndarray:
    """Per-time log full conditional of ``ln(lambda2_t)``, shape ``(J,)``.

    The pseudo-observation ``L_t = ln(lambda2_t) + nu2/2`` has mean
    ``eta_mean[t] = F2_t' eta_t`` and variance ``nu2``. Times are
    conditionally independent given the states.
    """
    log_lam2 = np.asarray(log_lam2, dtype=float)
    L = log_lam2 + 0.5 * nu2
    out = -0.5 * (LOG_2PI + np.log(nu2)) - 0.5 * (L - eta_mean) ** 2 / nu2
    if likelihood:
        out = out + obs.per_time(log_lam1, log_lam2)
    return out


def sample_lambda2(rng, log_lam2, steps, obs: ObsTerms, log_lam1, eta_mean, nu2, likelihood=True):
    """Simultaneous, independent random-walk updates of every ``ln(lambda2_t)``.

    Returns the updated vector and per-time acceptance flags.
    """
    cur = np.array(log_lam2, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), cur.shape)
    z = rng.standard_normal(cur.size)
    u = np.log(rng.uniform(size=cur.size))
    prop = cur + steps * z
    cur_t = lambda2_logtarget_terms(cur, obs, log_lam1, eta_mean, nu2, likelihood)
    prop_t = lambda2_logtarget_terms(prop, obs, log_lam1, eta_mean, nu2, likelihood)
    accept = (u < prop_t - cur_t) | (steps == 0.0)
    return np.where(accept, prop, cur), accept


def beta_conditional(log_lam1, nu1, corr_xi, F1):
    """Mean and covariance of ``beta | lambda1, nu1, xi``.

    ``F1`` is the ``p1 x n`` spatial-variance design.
    """
    F1 = np.atleast_2d(np.asarray(F1, dtype=float))
    p1, n = F1.shape
    if p1 > n:
        raise DesignRankError(f"spatial-variance design has {p1} rows for {n} sites")
    L = mvn_chol(corr_xi)
    CinvFt = cho_solve((L, True), F1.T)
    M = F1 @ CinvFt
    if np.linalg.matrix_rank(M) < p1:
        raise DesignRankError("F1 C_xi^-1 F1' is rank deficient")
    y = np.asarray(log_lam1, dtype=float) + 0.5 * nu1
    Minv = np.linalg.inv(M)
    Minv = 0.5 * (Minv + Minv.T)
    mean = Minv @ (CinvFt.T @ y)
    return mean, nu1 * Minv


def sample_beta(rng, log_lam1, nu1, corr_xi, F1) -> np.ndarray:
    mean, cov = beta_conditional(log_lam1, nu1, corr_xi, F1)
    return mean + np.linalg.cholesky(cov) @ rng.standard_normal(mean.size)


def st_log_prior(log_lam, nu1) -> float:
    """``Gamma(nu1/2, nu1/2)`` prior on ``lambda``, as a density of ``ln(lambda)``."""
    lam = np.exp(log_lam)
    return float(stats.gamma.logpdf(lam, 0.5 * nu1, scale=2.0 / nu1) + log_lam)


def sample_lambda_st(rng, log_lam, step, obs: ObsTerms, nu1, likelihood=True):
    """Random-walk update of the single Student-t mixing scalar on the log scale.

    The scalar multiplies every site and time. Returns ``(log_lam, accepted)``.
    """
    z = rng.standard_normal()
    u = np.log(rng.uniform())
    if step == 0.0:
        return float(log_lam), True
    likelihood = likelihood and obs is not None
    if likelihood:
        J, n = obs.resid.shape
        zeros_t = np.zeros(J)

    def target(x):
        out = st_log_prior(x, nu1)
        if likelihood:
            out += obs.total(np.full(n, x), zeros_t)
        return out

    prop = log_lam + step * z
    if u < target(prop) - target(log_lam):
        return float(prop), True
    return float(log_lam), False
