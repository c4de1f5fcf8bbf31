"""Discount-factor dynamic linear models: filtering, FFBS, smoothing, forecasting.

Notation follows West & Harrison: observation ``y_t = F_t' x_t + v_t`` with
``v_t ~ N(0, V_t)`` and evolution ``x_t = G_t x_{t-1} + w_t`` with
``w_t ~ N(0, W_t)``. When no explicit ``W`` is given the evolution variance
comes from the discount factor, ``W_t = (1 - delta)/delta * G_t C_{t-1} G_t'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericalDefinitenessError, ParameterDomainError
from .spatial_cov import LOG_2PI, mvn_chol


@dataclass
class DlmSpec:
    """Everything the filter needs for one DLM pass.

    Attributes
    ----------
    F : ndarray, shape (J, p, n)
        Design matrices; ``F[t-1]`` is ``F_t``.
    V : ndarray, shape (J, n, n)
        Observational covariances.
    G : ndarray, shape (p, p) or (J, p, p)
        Evolution matrix, constant or per time.
    delta : float
        Discount factor in (0, 1]. Ignored when ``W`` is given.
    m0, C0 : ndarray
        Prior moments of the state at time 0.
    W : ndarray, optional
        Explicit evolution covariance, shape (p, p) or (J, p, p).
    """

    F: np.ndarray
    V: np.ndarray
    G: np.ndarray
    delta: float
    m0: np.ndarray
    C0: np.ndarray
    W: Optional[np.ndarray] = None

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        self.m0 = np.asarray(self.m0, dtype=float).ravel()
        self.C0 = np.atleast_2d(np.asarray(self.C0, dtype=float))
        if self.W is not None:
            self.W = np.asarray(self.W, dtype=float)
        elif not (0.0 < self.delta <= 1.0):
            raise ParameterDomainError(f"discount factor must lie in (0, 1], got {self.delta}")
        J, p, n = self.F.shape
        if self.V.shape != (J, n, n):
            raise ValueError(f"V has shape {self.V.shape}, expected {(J, n, n)}")
        if self.m0.shape != (p,) or self.C0.shape != (p, p):
            raise ValueError("prior moments do not match the state dimension")
        if self.G.shape not in ((p, p), (J, p, p)):
            raise ValueError(f"G has shape {self.G.shape}")

    @property
    def J(self) -> int:
        return self.F.shape[0]

    @property
    def p(self) -> int:
        return self.F.shape[1]

    def G_at(self, t: int) -> np.ndarray:
        """Evolution matrix ``G_t`` for ``t`` in 1..J (the last one is reused beyond J)."""
        if self.G.ndim == 2:
            return self.G
        return self.G[min(t, self.J) - 1]

    def W_at(self, t: int) -> Optional[np.ndarray]:
        if self.W is None:
            return None
        if self.W.ndim == 2:
            return self.W
        return self.W[min(t, self.J) - 1]


@dataclass
class FilterMoments:
    """Forward-filter output. Index 0 of ``m``/``C`` holds the prior at t=0;
    every other array is indexed ``t-1`` for t = 1..J."""

    a: np.ndarray
    R: np.ndarray
    f: np.ndarray
    Q: np.ndarray
    m: np.ndarray
    C: np.ndarray
    e: np.ndarray
    A: np.ndarray
    W: np.ndarray
    loglik: np.ndarray = field(default=None)


def _sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def _sample_cov(rng, mean, cov):
    if not np.any(cov):
        return mean.copy()
    return mean + mvn_chol(cov) @ rng.standard_normal(mean.size)


def forward_filter(spec: DlmSpec, obs) -> FilterMoments:
    """Kalman filter in the West & Harrison form.

    ``obs`` has shape ``(J, n)``. A row that is entirely NaN is treated as
    missing: the posterior at that time equals the prior.
    """
    obs = np.asarray(obs, dtype=float)
    J, p, n = spec.F.shape
    if obs.shape != (J, n):
        raise ValueError(f"observations have shape {obs.shape}, expected {(J, n)}")

    a = np.empty((J, p))
    R = np.empty((J, p, p))
    f = np.empty((J, n))
    Q = np.empty((J, n, n))
    m = np.empty((J + 1, p))
    C = np.empty((J + 1, p, p))
    e = np.full((J, n), np.nan)
    A = np.zeros((J, p, n))
    W = np.empty((J, p, p))
    loglik = np.zeros(J)
    m[0] = spec.m0
    C[0] = spec.C0

    for t in range(1, J + 1):
        G = spec.G_at(t)
        Ft = spec.F[t - 1]
        at = G @ m[t - 1]
        P = G @ C[t - 1] @ G.T
        Wt = spec.W_at(t)
        if Wt is None:
            Wt = (1.0 - spec.delta) / spec.delta * P
        Rt = _sym(P + Wt)
        ft = Ft.T @ at
        RF = Rt @ Ft
        Qt = _sym(Ft.T @ RF + spec.V[t - 1])
        a[t - 1], R[t - 1], f[t - 1], Q[t - 1], W[t - 1] = at, Rt, ft, Qt, Wt

        zt = obs[t - 1]
        missing = np.isnan(zt)
        if missing.all():
            m[t], C[t] = at, Rt
            loglik[t - 1] = 0.0
            continue
        if missing.any():
            raise ValueError(f"partially missing observation at t={t} is not supported")
        try:
            Lq = np.linalg.cholesky(Qt)
        except np.linalg.LinAlgError:
            raise NumericalDefinitenessError(
                f"one-step forecast covariance Q_{t} is not positive definite",
                min_eigenvalue=float(np.linalg.eigvalsh(Qt)[0]),
            ) from None
        et = zt - ft
        B = solve_triangular(Lq, RF.T, lower=True, check_finite=False)
        u = solve_triangular(Lq, et, lower=True, check_finite=False)
        m[t] = at + B.T @ u
        C[t] = _sym(Rt - B.T @ B)
        e[t - 1] = et
        A[t - 1] = solve_triangular(Lq.T, B, lower=False, check_finite=False).T
        loglik[t - 1] = -0.5 * n * LOG_2PI - np.sum(np.log(np.diag(Lq))) - 0.5 * u @ u

    return FilterMoments(a=a, R=R, f=f, Q=Q, m=m, C=C, e=e, A=A, W=W, loglik=loglik)


def _backward_gain(C_t, G_next, R_next, t):
    CG = C_t @ G_next.T
    if not np.any(CG):
        return np.zeros_like(CG)
    try:
        L = np.linalg.cholesky(R_next)
    except np.linalg.LinAlgError:
        raise NumericalDefinitenessError(
            f"prior covariance R_{t + 1} is singular", min_eigenvalue=float(np.linalg.eigvalsh(R_next)[0])
        ) from None
    # B = CG R^-1
    tmp = solve_triangular(L, CG.T, lower=True, check_finite=False)
    return solve_triangular(L.T, tmp, lower=False, check_finite=False).T


def backward_sample(rng: np.random.Generator, spec: DlmSpec, mom: FilterMoments) -> np.ndarray:
    """One joint draw of the states ``x_0..x_J`` given all observations.

    Returns an array of shape ``(J + 1, p)``.
    """
    J, p = spec.J, spec.p
    out = np.empty((J + 1, p))
    out[J] = _sample_cov(rng, mom.m[J], mom.C[J])
    for t in range(J - 1, -1, -1):
        G = spec.G_at(t + 1)
        B = _backward_gain(mom.C[t], G, mom.R[t], t)
        h = mom.m[t] + B @ (out[t + 1] - mom.a[t])
        H = _sym(mom.C[t] - B @ G @ mom.C[t])
        out[t] = _sample_cov(rng, h, H)
    return out


def kalman_smooth(spec: DlmSpec, mom: FilterMoments):
    """Fixed-interval (Rauch-Tung-Striebel) smoother.

    Returns
    -------
    s : ndarray, shape (J + 1, p)
    S : ndarray, shape (J + 1, p, p)
    """
    J = spec.J
    s = mom.m.copy()
    S = mom.C.copy()
    for t in range(J - 1, -1, -1):
        G = spec.G_at(t + 1)
        B = _backward_gain(mom.C[t], G, mom.R[t], t)
        s[t] = mom.m[t] + B @ (s[t + 1] - mom.a[t])
        S[t] = _sym(mom.C[t] + B @ (S[t + 1] - mom.R[t]) @ B.T)
    return s, S


def next_evolution_cov(spec: DlmSpec, mom: FilterMoments) -> np.ndarray:
    """Evolution covariance used beyond the last time: discount applied to ``C_J``."""
    J = spec.J
    W = spec.W_at(J + 1)
    if W is not None:
        return W
    G = spec.G_at(J + 1)
    return _sym((1.0 - spec.delta) / spec.delta * G @ mom.C[J] @ G.T)


def propagate_states(rng, start, G, W, h) -> np.ndarray:
    """Random-walk style propagation ``x_k = G x_{k-1} + N(0, W)`` for ``h`` steps."""
    p = start.size
    out = np.empty((h, p))
    Lw = None if not np.any(W) else mvn_chol(W)
    x = np.asarray(start, dtype=float)
    for k in range(h):
        x = G @ x
        if Lw is not None:
            x = x + Lw @ rng.standard_normal(p)
        out[k] = x
    return out


def forecast_states(rng, spec: DlmSpec, mom: FilterMoments, h: int, start=None) -> np.ndarray:
    """Draw ``x_{J+1..J+h}``: start from ``start`` (or a draw of ``x_J``) and
    evolve with the discount-implied ``W`` held at its value for ``J+1``.

    Returns an array of shape ``(h, p)``.
    """
    if h < 1:
        raise ValueError("forecast horizon must be >= 1")
    if start is None:
        start = _sample_cov(rng, mom.m[spec.J], mom.C[spec.J])
    W = next_evolution_cov(spec, mom)
    return propagate_states(rng, np.asarray(start, dtype=float), spec.G_at(spec.J + 1), W, h)


def forecast_moments(spec: DlmSpec, mom: FilterMoments, h: int):
    """Prior moments ``(a_{J+k}, R_{J+k})`` for k = 1..h under the constant-``W`` forecast."""
    W = next_evolution_cov(spec, mom)
    G = spec.G_at(spec.J + 1)
    a, R = mom.m[spec.J], mom.C[spec.J]
    out_a, out_R = [], []
    for _ in range(h):
        a = G @ a
        R = _sym(G @ R @ G.T + W)
        out_a.append(a)
        out_R.append(R)
    return np.array(out_a), np.array(out_R)
