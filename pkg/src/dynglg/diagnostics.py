"""Convergence diagnostics for scalar MCMC output."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_toeplitz

from .errors import DegenerateChainError

MIN_LENGTH = 100


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased sample autocovariances at every lag, via FFT."""
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def spectrum0_ar(x) -> float:
    """Spectral density at frequency zero from an AR fit.

    Orders ``0..min(n - 1, 10 log10 n)`` are fitted by Yule-Walker and the
    one with the smallest AIC is kept; the density is
    ``sigma2 / (1 - sum(a))**2``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    acov = _autocov(x)
    if acov[0] <= 0:
        return 0.0
    max_order = int(min(n - 1, np.floor(10 * np.log10(n))))
    best_aic, best = n * np.log(acov[0]), (0.0, acov[0])
    for k in range(1, max_order + 1):
        a = solve_toeplitz(acov[:k], acov[1 : k + 1])
        var = acov[0] - a @ acov[1 : k + 1]
        if var <= 0:
            break
        aic = n * np.log(var) + 2 * k
        if aic < best_aic:
            best_aic, best = aic, (float(np.sum(a)), float(var))
    s, var = best
    return var / (1.0 - s) ** 2


def geweke_z(chain, frac_a: float = 0.1, frac_b: float = 0.5) -> float:
    """Difference of the early and late segment means in standard units.

    Segment variances are spectral densities at zero over segment length.

    Raises
    ------
    DegenerateChainError
        If a segment has zero variance.
    """
    x = np.asarray(chain, dtype=float).ravel()
    if x.size < MIN_LENGTH:
        raise ValueError(f"chain needs at least {MIN_LENGTH} draws, got {x.size}")
    if not (0 < frac_a and 0 < frac_b and frac_a + frac_b <= 1):
        raise ValueError("segment fractions must be positive and sum to at most 1")
    na = int(np.floor(frac_a * x.size))
    nb = int(np.floor(frac_b * x.size))
    a, b = x[:na], x[x.size - nb :]
    va = spectrum0_ar(a) / na
    vb = spectrum0_ar(b) / nb
    if va <= 0 or vb <= 0:
        raise DegenerateChainError("a chain segment has zero variance")
    return float((a.mean() - b.mean()) / np.sqrt(va + vb))


def effective_sample_size(chain) -> float:
    """``N / tau`` with Geyer's initial monotone positive sequence.

    ``tau`` is bounded below by ``1 / log10(N)`` so that anti-correlated
    chains report an ESS above ``N`` without diverging. A constant chain
    returns ``N``.
    """
    x = np.asarray(chain, dtype=float).ravel()
    n = x.size
    if n < MIN_LENGTH:
        raise ValueError(f"chain needs at least {MIN_LENGTH} draws, got {n}")
    acov = _autocov(x)
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    # pair sums rho_{2m} + rho_{2m+1}, kept while positive, then made monotone
    npairs = n // 2
    pairs = rho[: 2 * npairs : 2] + rho[1 : 2 * npairs : 2]
    stop = np.argmax(pairs <= 0) if np.any(pairs <= 0) else npairs
    pairs = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * float(np.sum(pairs))
    tau = max(tau, 1.0 / np.log10(n))
    return float(n / tau)
