"""Model variants, priors and static parameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ParameterDomainError

VARIANTS = ("G", "ST", "GLG", "Dyn", "CovDyn", "DynGLG", "CovDynGLG", "Full")

# spatial mixing: "none" (lambda1 = 1), "st" (one Gamma scalar), "glg" (log-Gaussian field)
_LAMBDA1 = {
    "G": "none",
    "ST": "st",
    "GLG": "glg",
    "Dyn": "none",
    "CovDyn": "none",
    "DynGLG": "glg",
    "CovDynGLG": "glg",
    "Full": "glg",
}
_DYNAMIC = {"Dyn", "CovDyn", "DynGLG", "CovDynGLG", "Full"}
_TEMPORAL_COVARIATES = {"CovDyn", "CovDynGLG", "Full"}
_SPATIAL_COVARIATES = {"Full"}


@dataclass(frozen=True)
class Variant:
    """Structural flags of one row of the competing-model table."""

    name: str

    def __post_init__(self):
        if self.name not in VARIANTS:
            raise ParameterDomainError(
                f"unknown model variant {self.name!r}; expected one of {', '.join(VARIANTS)}"
            )

    @property
    def lambda1(self) -> str:
        return _LAMBDA1[self.name]

    @property
    def dynamic(self) -> bool:
        return self.name in _DYNAMIC

    @property
    def temporal_covariates(self) -> bool:
        return self.name in _TEMPORAL_COVARIATES

    @property
    def spatial_covariates(self) -> bool:
        return self.name in _SPATIAL_COVARIATES

    def static_blocks(self) -> list[str]:
        """Names of the static parameters updated by Metropolis-Hastings."""
        blocks = ["sigma2", "tau2", "phi", "alpha"]
        if self.lambda1 == "glg":
            blocks += ["gamma", "nu1"]
        elif self.lambda1 == "st":
            blocks += ["nu1"]
        if self.dynamic:
            blocks += ["nu2"]
        return blocks


@dataclass(frozen=True)
class PriorSet:
    """Hyperparameters. Gamma distributions use the shape/rate convention.

    ``sigma2`` and ``tau2`` are the Gamma hyperparameters of the precisions
    ``1/sigma2`` and ``1/tau2``. The range ``phi`` gets
    ``Gamma(1, phi_c / median_distance)``. The mixing range ``gamma`` gets
    ``Gamma(gamma_a, gamma_b)`` when ``gamma_b`` is set, otherwise the
    distance-scaled ``Gamma(gamma_a, gamma_c / median_distance)``.
    """

    sigma2_a: float = 0.01
    sigma2_b: float = 0.01
    tau2_a: float = 0.01
    tau2_b: float = 0.01
    phi_c: float = 1.0
    alpha_lo: float = 0.0
    alpha_hi: float = 2.0
    gamma_a: float = 1.0
    gamma_b: Optional[float] = None
    gamma_c: float = 1.0
    nu_a: float = 2.0
    nu_b: float = 2.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name == "alpha_lo":
                if value < 0:
                    raise ParameterDomainError("alpha_lo must be >= 0")
            elif name == "gamma_b" and value is None:
                continue
            elif not value > 0:
                raise ParameterDomainError(f"prior hyperparameter {name} must be > 0")
        if not self.alpha_lo < self.alpha_hi:
            raise ParameterDomainError("alpha prior needs alpha_lo < alpha_hi")

    def phi_rate(self, median_distance: float) -> float:
        return self.phi_c / median_distance

    def gamma_rate(self, median_distance: float) -> float:
        return self.gamma_c / median_distance if self.gamma_b is None else self.gamma_b

    def logpdf(self, name: str, value: float, median_distance: float) -> float:
        """Prior log density of one static parameter on its natural scale."""
        if name in ("sigma2", "tau2"):
            a, b = (self.sigma2_a, self.sigma2_b) if name == "sigma2" else (self.tau2_a, self.tau2_b)
            return float(stats.invgamma.logpdf(value, a, scale=b))
        if name == "phi":
            return float(stats.gamma.logpdf(value, 1.0, scale=1.0 / self.phi_rate(median_distance)))
        if name == "alpha":
            return float(stats.uniform.logpdf(value, self.alpha_lo, self.alpha_hi - self.alpha_lo))
        if name == "gamma":
            return float(stats.gamma.logpdf(value, self.gamma_a, scale=1.0 / self.gamma_rate(median_distance)))
        if name in ("nu1", "nu2"):
            return float(stats.gamma.logpdf(value, self.nu_a, scale=1.0 / self.nu_b))
        raise KeyError(name)


@dataclass
class StaticParams:
    sigma2: float = 1.0
    tau2: float = 0.1
    phi: float = 1.0
    alpha: float = 1.0
    gamma: float = 1.0
    nu1: float = 0.5
    nu2: float = 0.5
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def copy(self) -> "StaticParams":
        return replace(self, beta=np.array(self.beta, dtype=float))

    def scalars(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("sigma2", "tau2", "phi", "alpha", "gamma", "nu1", "nu2")}


@dataclass
class ModelSpec:
    """Run-level model configuration.

    ``fixed`` lists sampler blocks to hold at their current values
    (static names, ``"lambda1"``, ``"lambda2"``, ``"beta"``, ``"theta"``,
    ``"eta"``). ``G`` and ``G2`` default to identity evolutions.
    """

    variant: str = "G"
    delta1: float = 0.99
    delta2: float = 0.99
    priors: PriorSet = field(default_factory=PriorSet)
    G: Optional[np.ndarray] = None
    G2: Optional[np.ndarray] = None
    C0_scale: float = 1e3
    C0_eta_scale: float = 1e3
    lambda1_block: int = 1
    target_accept: float = 0.44
    fixed: frozenset = frozenset()

    def __post_init__(self):
        Variant(self.variant)
        for name in ("delta1", "delta2"):
            d = getattr(self, name)
            if not 0.0 < d <= 1.0:
                raise ParameterDomainError(f"{name} must lie in (0, 1], got {d}")
        if self.lambda1_block < 1:
            raise ParameterDomainError("lambda1_block must be >= 1")
        self.fixed = frozenset(self.fixed)

    @property
    def flags(self) -> Variant:
        return Variant(self.variant)

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "priors": asdict(self.priors),
            "C0_scale": self.C0_scale,
            "C0_eta_scale": self.C0_eta_scale,
            "lambda1_block": self.lambda1_block,
            "target_accept": self.target_accept,
            "fixed": sorted(self.fixed),
        }
        out["G"] = None if self.G is None else np.asarray(self.G).tolist()
        out["G2"] = None if self.G2 is None else np.asarray(self.G2).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["priors"] = PriorSet(**d.get("priors", {}))
        d["fixed"] = frozenset(d.get("fixed", ()))
        for key in ("G", "G2"):
            if d.get(key) is not None:
                d[key] = np.asarray(d[key], dtype=float)
        return cls(**d)
