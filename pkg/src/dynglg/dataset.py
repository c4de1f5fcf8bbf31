"""In-memory spatio-temporal dataset."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError
from .spatial_cov import SiteSet


@dataclass
class SpatioTemporalDataset:
    """Responses on ``n`` sites by ``J`` times plus the three designs.

    Arrays are time-major: ``z[t, i]`` is the response at time ``t`` and
    site ``i``; ``X[t, i, :]`` is the mean covariate row ``x_t(s_i)``
    (intercept included). ``X1[i, :]`` holds the spatial-variance
    covariates and ``X2[t, :]`` the temporal-variance covariates, neither
    with an intercept column.
    """

    site_ids: list
    sites: SiteSet
    times: list
    z: np.ndarray
    X: np.ndarray
    X1: Optional[np.ndarray] = None
    X2: Optional[np.ndarray] = None
    mean_names: list = field(default_factory=list)
    var1_names: list = field(default_factory=list)
    var2_names: list = field(default_factory=list)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        J, n = self.z.shape
        if self.X.ndim != 3 or self.X.shape[:2] != (J, n):
            raise DataError(f"mean design has shape {self.X.shape}, expected ({J}, {n}, p)")
        if self.sites.n != n or len(self.site_ids) != n:
            raise DataError("site metadata does not match the response matrix")
        if len(self.times) != J:
            raise DataError("time labels do not match the response matrix")
        if self.X1 is not None:
            self.X1 = np.asarray(self.X1, dtype=float).reshape(n, -1)
        if self.X2 is not None:
            self.X2 = np.asarray(self.X2, dtype=float).reshape(J, -1)
        for name in ("X", "X1", "X2"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise DataError(f"covariates in {name} are not finite")

    @property
    def n(self) -> int:
        return self.z.shape[1]

    @property
    def J(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[2]

    def subset(self, site_idx=None, time_idx=None) -> "SpatioTemporalDataset":
        si = np.arange(self.n) if site_idx is None else np.asarray(site_idx, dtype=int)
        ti = np.arange(self.J) if time_idx is None else np.asarray(time_idx, dtype=int)
        return SpatioTemporalDataset(
            site_ids=[self.site_ids[i] for i in si],
            sites=self.sites.subset(si),
            times=[self.times[t] for t in ti],
            z=self.z[np.ix_(ti, si)],
            X=self.X[np.ix_(ti, si)],
            X1=None if self.X1 is None else self.X1[si],
            X2=None if self.X2 is None else self.X2[ti],
            mean_names=list(self.mean_names),
            var1_names=list(self.var1_names),
            var2_names=list(self.var2_names),
        )

    def site_index(self, ids) -> np.ndarray:
        lookup = {s: i for i, s in enumerate(self.site_ids)}
        try:
            return np.array([lookup[s] for s in ids], dtype=int)
        except KeyError as exc:
            raise DataError(f"unknown site id {exc.args[0]!r}") from None

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.z, self.X, self.sites.coords, self.X1, self.X2):
            if arr is not None:
                h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
                h.update(str(arr.shape).encode())
        h.update("|".join(map(str, self.site_ids)).encode())
        h.update("|".join(map(str, self.times)).encode())
        return h.hexdigest()
