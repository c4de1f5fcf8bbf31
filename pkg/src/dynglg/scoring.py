"""Proper scoring rules for predictive model comparison.

All three scores are negatively oriented: smaller is better.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from .spatial_cov import chol_batch, mvn_logpdf_batch

DEFAULT_LEVEL = 0.05
DEFAULT_VS_ORDER = 0.25


def interval_score(l, u, z, gamma: float = DEFAULT_LEVEL):
    """``(u - l) + 2/gamma (l - z) 1{z < l} + 2/gamma (z - u) 1{z > u}``.

    Broadcasts over arrays; returns a float for scalar input.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    l, u, z = (np.asarray(a, dtype=float) for a in (l, u, z))
    if np.any(l > u):
        raise ValueError("interval lower bound exceeds upper bound")
    out = (u - l) + (2.0 / gamma) * (l - z) * (z < l) + (2.0 / gamma) * (z - u) * (z > u)
    return float(out) if out.ndim == 0 else out


class LogScore(NamedTuple):
    value: float
    per_time: np.ndarray
    underflow: bool


def log_predictive_score(mean, cov, z) -> LogScore:
    """Negative log of the Rao-Blackwellized predictive density at ``z``.

    The density at each time is the equal-weight mixture of the per-draw
    conditional Gaussians, evaluated by log-sum-exp; the score is the sum
    over times.

    Parameters
    ----------
    mean : array, shape (K, T, d)
    cov : array, shape (K, T, d, d)
    z : array, shape (T, d)

    A 2-d ``mean`` (``K, d``) with 3-d ``cov`` and 1-d ``z`` is read as a
    single time.

    Returns
    -------
    LogScore
        ``value`` is ``inf`` and ``underflow`` true when every mixture
        component has zero density at some time.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    z = np.asarray(z, dtype=float)
    if mean.ndim == 2:
        mean, cov, z = mean[:, None], cov[:, None], z[None]
    K, T, d = mean.shape
    if cov.shape != (K, T, d, d) or z.shape != (T, d):
        raise ValueError(f"shape mismatch: mean {mean.shape}, cov {cov.shape}, z {z.shape}")
    L = chol_batch(cov.reshape(K * T, d, d))
    resid = (z[None] - mean).reshape(K * T, d)
    logf = mvn_logpdf_batch(resid, L).reshape(K, T)
    with np.errstate(divide="ignore"):
        per_t = -(logsumexp(logf, axis=0) - np.log(K))
    underflow = bool(np.any(~np.isfinite(per_t)))
    if underflow:
        warnings.warn("predictive density underflows at some time; score is +inf", RuntimeWarning, stacklevel=2)
        per_t = np.where(np.isfinite(per_t), per_t, np.inf)
    return LogScore(float(np.sum(per_t)), per_t, underflow)


def default_vs_weights(d: int) -> np.ndarray:
    return np.ones((d, d)) - np.eye(d)


def inverse_distance_weights(dist) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore"):
        w = np.where(dist > 0, 1.0 / dist, 0.0)
    np.fill_diagonal(w, 0.0)
    return w


def variogram_score(draws, z, p: float = DEFAULT_VS_ORDER, w=None) -> float:
    """Variogram score of order ``p`` for one multivariate observation.

    Sums over all ordered pairs ``(i, j)``:
    ``w_ij (|z_i - z_j|^p - mean_k |x_ki - x_kj|^p)^2``.

    Parameters
    ----------
    draws : array, shape (M, d)
    z : array, shape (d,)
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    z = np.asarray(z, dtype=float)
    d = z.size
    if draws.shape[1] != d or d < 2:
        raise ValueError("need d >= 2 components and draws of matching width")
    if not p > 0:
        raise ValueError("variogram order must be positive")
    w = default_vs_weights(d) if w is None else np.asarray(w, dtype=float)
    if w.shape != (d, d):
        raise ValueError(f"weights must be {d}x{d}")
    if np.any(w < 0):
        raise ValueError("variogram weights must be non-negative")
    obs = np.abs(z[:, None] - z[None, :]) ** p
    # averaging the gaps keeps a perfect forecast at exactly zero
    gap = np.mean(obs - np.abs(draws[:, :, None] - draws[:, None, :]) ** p, axis=0)
    return float(np.sum(w * gap**2))


@dataclass
class ScoreReport:
    """Scores and their decompositions.

    ``is_terms`` is ``(T, d)``, one interval score per time and site;
    ``lps_terms`` and ``vs_terms`` are per time. Totals are plain sums of
    the decompositions.
    """

    level: float
    vs_order: float
    weights: np.ndarray
    is_terms: np.ndarray
    lps_terms: np.ndarray
    vs_terms: np.ndarray
    lps_underflow: bool = False
    site_ids: list = field(default_factory=list)
    times: list = field(default_factory=list)

    @property
    def is_total(self) -> float:
        return float(np.sum(self.is_terms))

    @property
    def is_mean(self) -> float:
        return float(np.mean(self.is_terms))

    @property
    def lps_total(self) -> float:
        return float(np.sum(self.lps_terms))

    @property
    def vs_total(self) -> float:
        return float(np.sum(self.vs_terms))

    def totals(self) -> dict:
        return {"IS": self.is_total, "IS_mean": self.is_mean, "LPS": self.lps_total, "VS": self.vs_total}

    def rows(self):
        """Flat ``(criterion, site, time, value)`` records; ``"*"`` marks aggregates."""
        for t, tl in enumerate(self.times):
            for i, sid in enumerate(self.site_ids):
                yield ("IS", sid, tl, float(self.is_terms[t, i]))
        for t, tl in enumerate(self.times):
            yield ("LPS", "*", tl, float(self.lps_terms[t]))
        for t, tl in enumerate(self.times):
            yield ("VS", "*", tl, float(self.vs_terms[t]))
        for name, value in self.totals().items():
            yield (name, "*", "total", value)


def score_predictions(draws, z_obs, level: float = DEFAULT_LEVEL, vs_order: float = DEFAULT_VS_ORDER,
                      weights: Optional[np.ndarray] = None) -> ScoreReport:
    """Interval, log predictive and variogram scores of predictive draws.

    ``draws`` is a :class:`~dynglg.predict.PredictiveDraws`; ``z_obs`` the
    realized responses ``(T, d)``. Intervals are the empirical
    ``level/2`` and ``1 - level/2`` quantiles of the draws. The variogram
    score needs at least two target sites; with one it is reported as 0.
    """
    z_obs = np.asarray(z_obs, dtype=float)
    Z = draws.z
    R, T, d = Z.shape
    if z_obs.shape != (T, d):
        raise ValueError(f"observations have shape {z_obs.shape}, draws cover {(T, d)}")
    lo, hi = np.quantile(Z, [0.5 * level, 1.0 - 0.5 * level], axis=0)
    is_terms = interval_score(lo, hi, z_obs, level)
    lps = log_predictive_score(draws.mean, draws.cov, z_obs)
    w = default_vs_weights(d) if weights is None else np.asarray(weights, dtype=float)
    if d >= 2:
        vs_terms = np.array([variogram_score(Z[:, t], z_obs[t], vs_order, w) for t in range(T)])
    else:
        vs_terms = np.zeros(T)
    return ScoreReport(
        level=level, vs_order=vs_order, weights=w, is_terms=np.asarray(is_terms), lps_terms=lps.per_time,
        vs_terms=vs_terms, lps_underflow=lps.underflow, site_ids=list(draws.site_ids), times=list(draws.times),
    )
