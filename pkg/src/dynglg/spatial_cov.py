"""Correlation kernels, observation covariance assembly and Gaussian helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometryError,
    NumericalDefinitenessError,
    ParameterDomainError,
)

LOG_2PI = np.log(2.0 * np.pi)

# jitter ladder, relative to mean(diag)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class SiteSet:
    """Site coordinates with their Euclidean distance matrix.

    ``coords`` is an ``(n, 2)`` array of planar (or lat/lon) pairs; ``dist``
    is computed on construction when not supplied.
    """

    coords: np.ndarray
    dist: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if coords.size == 0:
            coords = coords.reshape(0, 2)
        object.__setattr__(self, "coords", coords)
        if self.dist is None:
            object.__setattr__(self, "dist", distance_matrix(coords))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def subset(self, idx) -> "SiteSet":
        idx = np.asarray(idx, dtype=int)
        return SiteSet(self.coords[idx], self.dist[np.ix_(idx, idx)])

    def has_duplicates(self) -> bool:
        if self.n < 2:
            return False
        off = self.dist[~np.eye(self.n, dtype=bool)]
        return bool(np.any(off <= 0.0))


def distance_matrix(a, b=None) -> np.ndarray:
    """Euclidean distances between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def cauchy_corr(d, phi, alpha):
    """Cauchy correlation ``[1 + (d/phi)**alpha]**-1``."""
    if not (phi > 0):
        raise ParameterDomainError(f"cauchy range phi must be > 0, got {phi}")
    if not (alpha > 0):
        raise ParameterDomainError(f"cauchy shape alpha must be > 0, got {alpha}")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ParameterDomainError("distances must be non-negative")
    out = 1.0 / (1.0 + (d / phi) ** alpha)
    return float(out) if out.ndim == 0 else out


def exp_corr(d, gamma):
    """Exponential correlation ``exp(-d/gamma)``."""
    if not (gamma > 0):
        raise ParameterDomainError(f"exponential range gamma must be > 0, got {gamma}")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ParameterDomainError("distances must be non-negative")
    out = np.exp(-d / gamma)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CorrelationKernel:
    """A closed registry of isotropic kernels: ``cauchy`` or ``exponential``.

    Parameters are given by name: ``phi`` and ``alpha`` for cauchy,
    ``gamma`` for exponential.
    """

    kind: str
    params: dict

    def __post_init__(self):
        if self.kind == "cauchy":
            required = ("phi", "alpha")
        elif self.kind == "exponential":
            required = ("gamma",)
        else:
            raise ParameterDomainError(f"unknown kernel kind {self.kind!r}")
        for name in required:
            if name not in self.params:
                raise ParameterDomainError(f"{self.kind} kernel requires {name!r}")
            if not (self.params[name] > 0):
                raise ParameterDomainError(
                    f"{self.kind} parameter {name} must be > 0, got {self.params[name]}"
                )

    @classmethod
    def cauchy(cls, phi, alpha):
        return cls("cauchy", {"phi": float(phi), "alpha": float(alpha)})

    @classmethod
    def exponential(cls, gamma):
        return cls("exponential", {"gamma": float(gamma)})

    def __call__(self, d):
        if self.kind == "cauchy":
            return cauchy_corr(d, self.params["phi"], self.params["alpha"])
        return exp_corr(d, self.params["gamma"])


def corr_matrix(sites: SiteSet, kernel: CorrelationKernel, check=True) -> np.ndarray:
    """Correlation matrix of ``kernel`` over all pairs of ``sites``.

    Raises
    ------
    DegenerateGeometryError
        If two sites coincide (only when ``check`` is true).
    """
    if check and sites.has_duplicates():
        raise DegenerateGeometryError("duplicate sites make the correlation matrix singular")
    c = np.asarray(kernel(sites.dist), dtype=float).reshape(sites.n, sites.n)
    np.fill_diagonal(c, 1.0)
    return c


def cross_corr(a: SiteSet, b: SiteSet, kernel: CorrelationKernel) -> np.ndarray:
    """Correlations between every site of ``a`` (rows) and ``b`` (columns)."""
    d = distance_matrix(a.coords, b.coords)
    return np.asarray(kernel(d), dtype=float).reshape(a.n, b.n)


@dataclass
class ObsCovariance:
    sigma2: float
    tau2: float
    corr: np.ndarray
    lambda_t: np.ndarray


def assemble_obs_cov(cov: ObsCovariance) -> np.ndarray:
    """``sigma2 * L^-1/2 C L^-1/2 + tau2 * I`` for one time point."""
    lam = np.asarray(cov.lambda_t, dtype=float)
    if np.any(~(lam > 0)):
        raise ParameterDomainError("mixing values must be strictly positive")
    if cov.sigma2 < 0 or cov.tau2 < 0:
        raise ParameterDomainError("variances must be non-negative")
    d = 1.0 / np.sqrt(lam)
    out = cov.sigma2 * np.asarray(cov.corr, dtype=float) * np.outer(d, d)
    out[np.diag_indices_from(out)] += cov.tau2
    return out


def obs_cov_batch(sigma2, tau2, corr, log_lam) -> np.ndarray:
    """Stack of observation covariances, one per row of ``log_lam`` (shape ``(J, n)``)."""
    d = np.exp(-0.5 * np.asarray(log_lam, dtype=float))
    out = sigma2 * corr[None, :, :] * d[:, :, None] * d[:, None, :]
    idx = np.arange(corr.shape[0])
    out[:, idx, idx] += tau2
    return out


def mvn_chol(m, return_jitter=False):
    """Lower Cholesky factor with an escalating diagonal-jitter fallback.

    The jitter starts at ``1e-10 * mean(diag)`` and grows tenfold up to
    ``1e-4 * mean(diag)``.

    Returns
    -------
    L : ndarray
        Lower-triangular factor.
    jitter : float
        Only when ``return_jitter`` is true; 0.0 if none was needed.
    """
    m = np.asarray(m, dtype=float)
    try:
        L = np.linalg.cholesky(m)
        return (L, 0.0) if return_jitter else L
    except np.linalg.LinAlgError:
        pass
    if not np.all(np.isfinite(m)):
        raise NumericalDefinitenessError("matrix has non-finite entries")
    scale = float(np.mean(np.diag(m)))
    if not scale > 0:
        scale = 1.0
    eye = np.eye(m.shape[0])
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            L = np.linalg.cholesky(m + jitter * scale * eye)
            return (L, jitter * scale) if return_jitter else L
        except np.linalg.LinAlgError:
            jitter *= 10.0
    min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
    raise NumericalDefinitenessError(
        f"matrix is not positive definite (smallest eigenvalue {min_eig:.3e})",
        min_eigenvalue=min_eig,
    )


def chol_batch(m) -> np.ndarray:
    """Batched Cholesky; falls back to :func:`mvn_chol` per matrix on failure."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return np.stack([mvn_chol(mi) for mi in m])


def mvn_logpdf(x, mean, chol) -> float:
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    chol = np.atleast_2d(np.asarray(chol, dtype=float))
    if x.shape != mean.shape or chol.shape != (x.size, x.size):
        raise ValueError(
            f"dimension mismatch: x {x.shape}, mean {mean.shape}, chol {chol.shape}"
        )
    diag = np.diag(chol)
    if np.any(diag <= 0):
        raise NumericalDefinitenessError("Cholesky factor has non-positive diagonal")
    y = np.linalg.solve(chol, (x - mean).ravel()) if x.size else np.zeros(0)
    return float(-0.5 * x.size * LOG_2PI - np.sum(np.log(diag)) - 0.5 * y @ y)


def mvn_logpdf_batch(resid, chol) -> np.ndarray:
    """Log densities of zero-mean residuals ``(J, n)`` under stacked factors ``(J, n, n)``."""
    n = resid.shape[-1]
    y = np.linalg.solve(chol, resid[..., None])[..., 0]
    logdet = np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * n * LOG_2PI - logdet - 0.5 * np.sum(y * y, axis=-1)


def mvn_sample(rng: np.random.Generator, mean, chol) -> np.ndarray:
    """``mean + chol @ z`` with ``z`` standard normal."""
    mean = np.asarray(mean, dtype=float)
    chol = np.atleast_2d(np.asarray(chol, dtype=float))
    if chol.shape != (mean.size, mean.size):
        raise ValueError(f"dimension mismatch: mean {mean.shape}, chol {chol.shape}")
    z = rng.standard_normal(mean.size)
    return mean + (chol @ z).reshape(mean.shape)
