"""Metropolis-within-Gibbs sampler over every model variant.

One sweep runs, in order: FFBS for the mean states, FFBS for the variance
states, the spatial mixing sweep, the temporal mixing sweep, the Gibbs
draw of the variance regression, and random-walk updates of the static
parameters. Blocks inactive under the variant are skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .dataset import SpatioTemporalDataset
from .errors import InitializationError, NonFiniteError, NumericalDefinitenessError, SamplerBlockError
from .mixing import (
    ObsTerms,
    SpatialMixingPrior,
    lambda2_logtarget_terms,
    sample_beta,
    sample_lambda1,
    sample_lambda2,
    sample_lambda_st,
    st_log_prior,
)
from .model import ModelSpec, StaticParams, Variant
from .spatial_cov import (
    CorrelationKernel,
    corr_matrix,
    mvn_chol,
    mvn_logpdf,
    obs_cov_batch,
)
from .state_space import (
    DlmSpec,
    backward_sample,
    forward_filter,
    kalman_smooth,
    next_evolution_cov,
)

log = logging.getLogger(__name__)

LOG_SCALE_PARAMS = ("sigma2", "tau2", "phi", "gamma", "nu1", "nu2")
INITIAL_STEP = {"static": 0.1, "lambda1": 0.3, "lambda2": 0.3, "lambda_st": 0.1}


def variance_designs(data: SpatioTemporalDataset, variant: Variant):
    """Spatial (``p1 x n``) and temporal (``J x p2``) variance designs for a variant.

    Dynamic variants without covariates use an intercept-only temporal
    design; covariate variants prepend an intercept to ``data.X2``. The
    spatial design is ``data.X1`` transposed, without intercept, and only
    for the Full variant.
    """
    F1 = None
    if variant.spatial_covariates:
        if data.X1 is None or data.X1.shape[1] == 0:
            raise ValueError(f"variant {variant.name} needs spatial-variance covariates")
        F1 = data.X1.T.copy()
    F2 = None
    if variant.dynamic:
        ones = np.ones((data.J, 1))
        if variant.temporal_covariates:
            if data.X2 is None or data.X2.shape[1] == 0:
                raise ValueError(f"variant {variant.name} needs temporal-variance covariates")
            F2 = np.hstack([ones, data.X2])
        else:
            F2 = ones
    return F1, F2


class SamplerContext:
    """Data-derived constants reused across sweeps."""

    def __init__(self, data: SpatioTemporalDataset, spec: ModelSpec):
        self.data = data
        self.spec = spec
        self.variant = spec.flags
        self.z = data.z
        if np.any(np.isnan(self.z)):
            raise ValueError("training responses contain missing values")
        self.X = data.X
        self.F = np.ascontiguousarray(data.X.transpose(0, 2, 1))
        self.F1, self.F2 = variance_designs(data, self.variant)
        self.dist = data.sites.dist
        n = data.n
        off = self.dist[np.triu_indices(n, 1)]
        self.median_distance = float(np.median(off)) if off.size else 1.0
        p = data.p
        self.G = np.eye(p) if spec.G is None else np.asarray(spec.G, dtype=float)
        p2 = 0 if self.F2 is None else self.F2.shape[1]
        self.G2 = np.eye(p2) if spec.G2 is None else np.asarray(spec.G2, dtype=float)

    @property
    def p1(self) -> int:
        return 0 if self.F1 is None else self.F1.shape[0]

    @property
    def p2(self) -> int:
        return 0 if self.F2 is None else self.F2.shape[1]

    def corr_psi(self, statics: StaticParams) -> np.ndarray:
        return corr_matrix(self.data.sites, CorrelationKernel.cauchy(statics.phi, statics.alpha), check=False)

    def corr_xi(self, statics: StaticParams) -> np.ndarray:
        return corr_matrix(self.data.sites, CorrelationKernel.exponential(statics.gamma), check=False)

    def resid(self, theta) -> np.ndarray:
        return self.z - np.einsum("tip,tp->ti", self.X, theta[1:])

    def obs_terms(self, state: "ChainState") -> ObsTerms:
        s = state.statics
        return ObsTerms(self.resid(state.theta), s.sigma2, s.tau2, self.corr_psi(s))

    def lambda1_regression(self, statics: StaticParams) -> np.ndarray:
        if self.F1 is None:
            return np.zeros(self.data.n)
        return self.F1.T @ statics.beta

    def lambda1_prior(self, statics: StaticParams) -> SpatialMixingPrior:
        return SpatialMixingPrior(statics.nu1, self.corr_xi(statics), self.lambda1_regression(statics))

    def eta_mean(self, eta) -> np.ndarray:
        return np.einsum("tp,tp->t", self.F2, eta[1:])

    def theta_dlm(self, state: "ChainState", delta=None) -> DlmSpec:
        s = state.statics
        log_lam = state.log_lam1[None, :] + state.log_lam2[:, None]
        V = obs_cov_batch(s.sigma2, s.tau2, self.corr_psi(s), log_lam)
        p = self.data.p
        return DlmSpec(
            F=self.F, V=V, G=self.G, delta=self.spec.delta1 if delta is None else delta,
            m0=np.zeros(p), C0=self.spec.C0_scale * np.eye(p),
        )

    def eta_dlm(self, state: "ChainState") -> DlmSpec:
        p2 = self.p2
        V = np.full((self.data.J, 1, 1), state.statics.nu2)
        return DlmSpec(
            F=self.F2[:, :, None], V=V, G=self.G2, delta=self.spec.delta2,
            m0=np.zeros(p2), C0=self.spec.C0_eta_scale * np.eye(p2),
        )

    def eta_obs(self, state: "ChainState") -> np.ndarray:
        return (state.log_lam2 + 0.5 * state.statics.nu2)[:, None]


@dataclass
class ChainState:
    """Current values of every latent and parameter of one chain.

    ``W_theta``/``W_eta`` are the discount-implied evolution covariances
    from the most recent FFBS pass; the ``*_next`` versions are the
    covariances used to forecast beyond the last time.
    """

    theta: np.ndarray
    eta: Optional[np.ndarray]
    log_lam1: np.ndarray
    log_lam2: np.ndarray
    statics: StaticParams
    W_theta: Optional[np.ndarray] = None
    W_eta: Optional[np.ndarray] = None
    W_theta_next: Optional[np.ndarray] = None
    W_eta_next: Optional[np.ndarray] = None
    steps: dict = field(default_factory=dict)
    iteration: int = 0

    def copy(self) -> "ChainState":
        def c(x):
            return None if x is None else np.array(x, copy=True)

        return ChainState(
            theta=c(self.theta), eta=c(self.eta), log_lam1=c(self.log_lam1), log_lam2=c(self.log_lam2),
            statics=self.statics.copy(), W_theta=c(self.W_theta), W_eta=c(self.W_eta),
            W_theta_next=c(self.W_theta_next), W_eta_next=c(self.W_eta_next),
            steps={k: (np.array(v, copy=True) if isinstance(v, np.ndarray) else v) for k, v in self.steps.items()},
            iteration=self.iteration,
        )


# ---------------------------------------------------------------------------
# log posterior


def _evolution_logpdf(x, G, W, m0, C0) -> float:
    out = mvn_logpdf(x[0], m0, mvn_chol(C0))
    for t in range(1, x.shape[0]):
        out += mvn_logpdf(x[t], G @ x[t - 1], mvn_chol(W[t - 1]))
    return out


def log_posterior(state: ChainState, data: SpatioTemporalDataset, spec: ModelSpec,
                  ctx: Optional[SamplerContext] = None, terms: bool = False):
    """Log joint density of data, latents and statics, up to a constant.

    Positive latents enter through their logs (the stored parameterization);
    statics enter on their natural scale. The evolution covariances are the
    ones stored on ``state`` (from the last FFBS pass); when missing they are
    recomputed by a forward filter under the current conditioning.

    With ``terms=True`` returns ``(total, dict_of_factors)``.

    Raises
    ------
    NonFiniteError
        If any factor is not finite; ``factor`` names the first one.
    """
    ctx = ctx or SamplerContext(data, spec)
    v = ctx.variant
    s = state.statics
    out = {}
    out["obs"] = ctx.obs_terms(state).total(state.log_lam1, state.log_lam2)
    if v.lambda1 == "glg":
        out["lambda1"] = ctx.lambda1_prior(s).logpdf(state.log_lam1)
    elif v.lambda1 == "st":
        out["lambda1"] = st_log_prior(state.log_lam1[0], s.nu1)
    if v.dynamic:
        out["lambda2"] = float(np.sum(lambda2_logtarget_terms(
            state.log_lam2, None, None, ctx.eta_mean(state.eta), s.nu2, likelihood=False)))

    W_theta = state.W_theta
    if W_theta is None:
        dlm = ctx.theta_dlm(state)
        W_theta = forward_filter(dlm, ctx.z).W
    p = data.p
    out["theta"] = _evolution_logpdf(state.theta, ctx.G, W_theta, np.zeros(p), spec.C0_scale * np.eye(p))
    if v.dynamic:
        W_eta = state.W_eta
        if W_eta is None:
            W_eta = forward_filter(ctx.eta_dlm(state), ctx.eta_obs(state)).W
        p2 = ctx.p2
        out["eta"] = _evolution_logpdf(state.eta, ctx.G2, W_eta, np.zeros(p2), spec.C0_eta_scale * np.eye(p2))

    for name in v.static_blocks():
        out["prior." + name] = spec.priors.logpdf(name, getattr(s, name), ctx.median_distance)

    for name, value in out.items():
        if not np.isfinite(value):
            raise NonFiniteError(f"log-posterior factor {name!r} is {value}", factor=name)
    total = float(sum(out.values()))
    return (total, out) if terms else total


# ---------------------------------------------------------------------------
# initialization


def initial_state(data: SpatioTemporalDataset, spec: ModelSpec, ctx: Optional[SamplerContext] = None) -> ChainState:
    """Starting point: lambda = 1, eta = 0, beta = 0, statics at prior
    medians where those are usable, theta from a static-coefficient filter.

    The vague inverse-gamma priors on the variances have unusable medians,
    so ``sigma2``/``tau2`` start from per-time least-squares residuals,
    split 90/10. ``gamma`` starts at the median inter-site distance.
    """
    ctx = ctx or SamplerContext(data, spec)
    pr = spec.priors
    J, n, p = data.J, data.n, data.p
    resid = []
    for t in range(J):
        coef, *_ = np.linalg.lstsq(data.X[t], data.z[t], rcond=None)
        resid.append(data.z[t] - data.X[t] @ coef)
    resid = np.concatenate(resid)
    dof = max(J * (n - p), 1)
    var = max(float(resid @ resid) / dof, 1e-8)
    nu_med = float(stats.gamma.median(pr.nu_a, scale=1.0 / pr.nu_b))
    statics = StaticParams(
        sigma2=0.9 * var,
        tau2=0.1 * var,
        phi=float(stats.gamma.median(1.0, scale=1.0 / pr.phi_rate(ctx.median_distance))),
        alpha=0.5 * (pr.alpha_lo + pr.alpha_hi),
        gamma=ctx.median_distance,
        nu1=nu_med,
        nu2=nu_med,
        beta=np.zeros(ctx.p1),
    )
    eta = np.zeros((J + 1, ctx.p2)) if ctx.variant.dynamic else None
    state = ChainState(
        theta=np.zeros((J + 1, p)), eta=eta, log_lam1=np.zeros(n), log_lam2=np.zeros(J), statics=statics,
    )
    dlm = ctx.theta_dlm(state, delta=1.0)
    mom = forward_filter(dlm, ctx.z)
    state.theta, _ = kalman_smooth(dlm, mom)
    # evolution covariances consistent with the run's discount
    mom = forward_filter(ctx.theta_dlm(state), ctx.z)
    state.W_theta = mom.W
    state.W_theta_next = next_evolution_cov(ctx.theta_dlm(state), mom)
    if eta is not None:
        emom = forward_filter(ctx.eta_dlm(state), ctx.eta_obs(state))
        state.W_eta = emom.W
        state.W_eta_next = next_evolution_cov(ctx.eta_dlm(state), emom)
    state.steps = initial_steps(ctx)
    return state


def initial_steps(ctx: SamplerContext) -> dict:
    v = ctx.variant
    steps = {name: INITIAL_STEP["static"] for name in v.static_blocks()}
    if v.lambda1 == "glg":
        nblocks = -(-ctx.data.n // ctx.spec.lambda1_block)
        steps["lambda1"] = np.full(nblocks, INITIAL_STEP["lambda1"])
    elif v.lambda1 == "st":
        steps["lambda_st"] = INITIAL_STEP["lambda_st"]
    if v.dynamic:
        steps["lambda2"] = np.full(ctx.data.J, INITIAL_STEP["lambda2"])
    return steps


# ---------------------------------------------------------------------------
# static-parameter Metropolis steps


def _to_internal(name, x, pr):
    if name == "alpha":
        u = (x - pr.alpha_lo) / (pr.alpha_hi - pr.alpha_lo)
        return float(np.log(u) - np.log1p(-u))
    return float(np.log(x))


def _from_internal(name, u, pr):
    """Natural value and log-Jacobian ``log|dx/du|``."""
    if name == "alpha":
        width = pr.alpha_hi - pr.alpha_lo
        s = 1.0 / (1.0 + np.exp(-u))
        return pr.alpha_lo + width * s, float(np.log(width) + np.log(s) + np.log1p(-s))
    return float(np.exp(u)), float(u)


def _static_factor(name, value, state: ChainState, ctx: SamplerContext, cache: dict) -> float:
    """Factors of the log posterior that depend on one static parameter."""
    s = state.statics.copy()
    setattr(s, name, value)
    if name in ("sigma2", "tau2", "phi", "alpha"):
        corr = cache["corr_psi"] if name in ("sigma2", "tau2") else ctx.corr_psi(s)
        obs = ObsTerms(cache["resid"], s.sigma2, s.tau2, corr)
        return obs.total(state.log_lam1, state.log_lam2)
    if name == "gamma" or (name == "nu1" and ctx.variant.lambda1 == "glg"):
        return ctx.lambda1_prior(s).logpdf(state.log_lam1)
    if name == "nu1":
        return st_log_prior(state.log_lam1[0], s.nu1)
    if name == "nu2":
        return float(np.sum(lambda2_logtarget_terms(
            state.log_lam2, None, None, ctx.eta_mean(state.eta), s.nu2, likelihood=False)))
    raise KeyError(name)


def _update_static(rng, name, state: ChainState, ctx: SamplerContext, cache: dict) -> bool:
    pr = ctx.spec.priors
    step = state.steps[name]
    z = rng.standard_normal()
    logu = np.log(rng.uniform())
    if step == 0.0:
        return True
    cur = getattr(state.statics, name)
    u_cur = _to_internal(name, cur, pr)
    u_prop = u_cur + step * z
    x_prop, jac_prop = _from_internal(name, u_prop, pr)
    _, jac_cur = _from_internal(name, u_cur, pr)
    if name == "alpha" and not (pr.alpha_lo < x_prop < pr.alpha_hi):
        return False
    # exp under/overflow lands outside the support: zero target density
    if not (np.isfinite(x_prop) and x_prop > 0.0):
        return False
    if "factor." + name not in cache:
        cache["factor." + name] = _static_factor(name, cur, state, ctx, cache)
    f_cur = cache["factor." + name]
    f_prop = _static_factor(name, x_prop, state, ctx, cache)
    md = ctx.median_distance
    lp_cur = f_cur + pr.logpdf(name, cur, md) + jac_cur
    lp_prop = f_prop + pr.logpdf(name, x_prop, md) + jac_prop
    if logu < lp_prop - lp_cur:
        setattr(state.statics, name, x_prop)
        return True
    return False


# ---------------------------------------------------------------------------
# the sweep


def _adapt(step, accepted, k, target):
    gain = (k + 1.0) ** -0.6
    return step * np.exp(gain * (np.asarray(accepted, dtype=float) - target))


def gibbs_sweep(rng, state: ChainState, data: SpatioTemporalDataset, spec: ModelSpec,
                ctx: Optional[SamplerContext] = None, adapt: bool = False, accept_log: Optional[dict] = None):
    """Advance ``state`` by one full Metropolis-within-Gibbs sweep (in place).

    ``accept_log`` collects per-block acceptance indicators when given.
    Returns the updated state.
    """
    ctx = ctx or SamplerContext(data, spec)
    v = ctx.variant
    fixed = spec.fixed
    acc = {}

    def run(block, fn):
        try:
            return fn()
        except SamplerBlockError:
            raise
        except Exception as exc:
            raise SamplerBlockError(block, exc) from exc

    if "theta" not in fixed:
        def theta_block():
            dlm = ctx.theta_dlm(state)
            mom = forward_filter(dlm, ctx.z)
            state.theta = backward_sample(rng, dlm, mom)
            state.W_theta = mom.W
            state.W_theta_next = next_evolution_cov(dlm, mom)
        run("theta", theta_block)

    if v.dynamic and "eta" not in fixed:
        def eta_block():
            dlm = ctx.eta_dlm(state)
            mom = forward_filter(dlm, ctx.eta_obs(state))
            state.eta = backward_sample(rng, dlm, mom)
            state.W_eta = mom.W
            state.W_eta_next = next_evolution_cov(dlm, mom)
        run("eta", eta_block)

    obs = ctx.obs_terms(state)

    if v.lambda1 == "glg" and "lambda1" not in fixed:
        def lam1_block():
            state.log_lam1, a = sample_lambda1(
                rng, state.log_lam1, state.steps["lambda1"], obs, state.log_lam2,
                ctx.lambda1_prior(state.statics), block_size=spec.lambda1_block,
            )
            acc["lambda1"] = a
        run("lambda1", lam1_block)
    elif v.lambda1 == "st" and "lambda1" not in fixed:
        def st_block():
            x, a = sample_lambda_st(rng, state.log_lam1[0], state.steps["lambda_st"], obs, state.statics.nu1)
            state.log_lam1 = np.full(data.n, x)
            acc["lambda_st"] = a
        run("lambda_st", st_block)

    if v.dynamic and "lambda2" not in fixed:
        def lam2_block():
            state.log_lam2, a = sample_lambda2(
                rng, state.log_lam2, state.steps["lambda2"], obs, state.log_lam1,
                ctx.eta_mean(state.eta), state.statics.nu2,
            )
            acc["lambda2"] = a
        run("lambda2", lam2_block)

    if v.spatial_covariates and "beta" not in fixed:
        def beta_block():
            state.statics.beta = sample_beta(
                rng, state.log_lam1, state.statics.nu1, ctx.corr_xi(state.statics), ctx.F1
            )
        run("beta", beta_block)

    cache = {"resid": obs.resid, "corr_psi": obs.corr}
    for name in v.static_blocks():
        if name in fixed:
            continue
        old = getattr(state.statics, name)
        a = run(name, lambda: _update_static(rng, name, state, ctx, cache))
        acc[name] = a
        if a and getattr(state.statics, name) != old:
            # cached factors that depended on the old value are stale
            if name in ("phi", "alpha"):
                cache["corr_psi"] = ctx.corr_psi(state.statics)
            for key in [k for k in cache if k.startswith("factor.")]:
                del cache[key]

    state.iteration += 1
    if adapt:
        for name, a in acc.items():
            state.steps[name] = _adapt(state.steps[name], a, state.iteration, spec.target_accept)
            if np.ndim(state.steps[name]) == 0:
                state.steps[name] = float(state.steps[name])
    if accept_log is not None:
        for name, a in acc.items():
            accept_log.setdefault(name, []).append(np.mean(a))
    return state


# ---------------------------------------------------------------------------
# chains


@dataclass
class PosteriorSamples:
    """Thinned draws of one chain plus bookkeeping.

    ``statics`` maps each static name to a ``(K,)`` array; ``beta`` is
    ``(K, p1)``; path arrays carry a leading draw axis.
    """

    statics: dict
    beta: np.ndarray
    theta: np.ndarray
    eta: Optional[np.ndarray]
    log_lam1: np.ndarray
    log_lam2: np.ndarray
    W_theta_next: np.ndarray
    W_eta_next: Optional[np.ndarray]
    log_post: np.ndarray
    acceptance: dict
    spec: dict
    seed: int
    data_hash: str
    site_ids: list
    times: list
    iters: int
    burnin: int
    thin: int

    @property
    def n_draws(self) -> int:
        return self.theta.shape[0]

    @property
    def fingerprint(self) -> str:
        return make_fingerprint(self.data_hash, self.spec, self.seed)

    def model_spec(self) -> ModelSpec:
        return ModelSpec.from_dict(self.spec)

    def draw_state(self, k: int) -> ChainState:
        names = ("sigma2", "tau2", "phi", "alpha", "gamma", "nu1", "nu2")
        statics = StaticParams(**{nm: float(self.statics[nm][k]) for nm in names}, beta=self.beta[k].copy())
        return ChainState(
            theta=self.theta[k].copy(), eta=None if self.eta is None else self.eta[k].copy(),
            log_lam1=self.log_lam1[k].copy(), log_lam2=self.log_lam2[k].copy(), statics=statics,
            W_theta_next=self.W_theta_next[k].copy(),
            W_eta_next=None if self.W_eta_next is None else self.W_eta_next[k].copy(),
        )

    def lambda_summaries(self) -> dict:
        return {
            "lam1_mean": np.exp(self.log_lam1).mean(axis=1),
            "lam2_mean": np.exp(self.log_lam2).mean(axis=1),
        }


def make_fingerprint(data_hash: str, spec: dict, seed: int) -> str:
    payload = json.dumps({"data": data_hash, "spec": spec, "seed": int(seed)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def run_chain(seed: int, data: SpatioTemporalDataset, spec: ModelSpec, iters: int, burnin: int, thin: int,
              init: Optional[ChainState] = None, progress_every: int = 0) -> PosteriorSamples:
    """Run one chain and keep every ``thin``-th draw after ``burnin``.

    Proposal scales adapt only during burn-in. Acceptance rates are
    recorded after burn-in (over the whole run when ``burnin == 0``).
    """
    if not (iters > burnin >= 0) or thin < 1:
        raise ValueError("need iters > burnin >= 0 and thin >= 1")
    rng = np.random.default_rng(seed)
    ctx = SamplerContext(data, spec)
    state = init.copy() if init is not None else initial_state(data, spec, ctx)
    if not state.steps:
        state.steps = initial_steps(ctx)
    try:
        log_posterior(state, data, spec, ctx)
    except (NonFiniteError, NumericalDefinitenessError, ValueError, np.linalg.LinAlgError) as exc:
        _, dump = _safe_terms(state, data, spec, ctx)
        raise InitializationError(f"non-finite log posterior at initialization ({exc})", dump) from exc

    K = (iters - burnin) // thin
    J, n, p = data.J, data.n, data.p
    p1, p2 = ctx.p1, ctx.p2
    names = ("sigma2", "tau2", "phi", "alpha", "gamma", "nu1", "nu2")
    out_statics = {nm: np.empty(K) for nm in names}
    out_beta = np.empty((K, p1))
    out_theta = np.empty((K, J + 1, p))
    out_eta = np.empty((K, J + 1, p2)) if ctx.variant.dynamic else None
    out_l1 = np.empty((K, n))
    out_l2 = np.empty((K, J))
    out_Wt = np.empty((K, p, p))
    out_We = np.empty((K, p2, p2)) if ctx.variant.dynamic else None
    out_lp = np.empty(K)
    accept_log: dict = {}

    k = 0
    for it in range(1, iters + 1):
        in_burn = it <= burnin
        gibbs_sweep(rng, state, data, spec, ctx, adapt=in_burn,
                    accept_log=accept_log if (not in_burn or burnin == 0) else None)
        if progress_every and it % progress_every == 0:
            log.info("iteration %d/%d", it, iters)
        if not in_burn and (it - burnin) % thin == 0 and k < K:
            for nm in names:
                out_statics[nm][k] = getattr(state.statics, nm)
            out_beta[k] = state.statics.beta
            out_theta[k] = state.theta
            if out_eta is not None:
                out_eta[k] = state.eta
                out_We[k] = state.W_eta_next
            out_l1[k] = state.log_lam1
            out_l2[k] = state.log_lam2
            out_Wt[k] = state.W_theta_next
            out_lp[k] = log_posterior(state, data, spec, ctx)
            k += 1

    acceptance = {name: float(np.mean(vals)) for name, vals in sorted(accept_log.items())}
    return PosteriorSamples(
        statics=out_statics, beta=out_beta, theta=out_theta, eta=out_eta, log_lam1=out_l1, log_lam2=out_l2,
        W_theta_next=out_Wt, W_eta_next=out_We, log_post=out_lp, acceptance=acceptance,
        spec=spec.to_dict(), seed=int(seed), data_hash=data.content_hash(), site_ids=list(data.site_ids),
        times=list(data.times), iters=iters, burnin=burnin, thin=thin,
    )


def _safe_terms(state, data, spec, ctx):
    dump = {}
    try:
        dump["obs"] = ctx.obs_terms(state).total(state.log_lam1, state.log_lam2)
    except Exception as exc:  # diagnostic only
        dump["obs"] = repr(exc)
    dump.update({f"static.{k}": v for k, v in state.statics.scalars().items()})
    return None, dump
