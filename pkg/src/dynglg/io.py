"""File formats: dataset CSVs, run configuration, chains, predictions, scores.

Every writer is deterministic: floats are written with ``repr`` (exact
round-trip) and binary arrays go through sequential ``np.save`` calls into
one stream, which carries no timestamps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import SpatioTemporalDataset
from .errors import ChainFormatError, ChainVersionError, ConfigError, DataError
from .model import VARIANTS, ModelSpec, PriorSet
from .sampler import PosteriorSamples
from .spatial_cov import SiteSet

log = logging.getLogger(__name__)

BASE_COLUMNS = ["site_id", "lat", "lon", "time", "z"]
MISSING_TOKENS = {"", "na", "nan", "null"}
MAX_MISSING_FRACTION = 0.05
CHAIN_FORMAT = "dynglg-chain"
CHAIN_VERSION = 1
PRED_FORMAT = "dynglg-predictions"
PRED_VERSION = 1
STATIC_NAMES = ("sigma2", "tau2", "phi", "alpha", "gamma", "nu1", "nu2")


def fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# datasets


def _parse_float(text, what, line):
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line}: {what} value {text!r} is not a number") from None


def _time_key(label):
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except (UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"{path}: unreadable CSV ({exc})") from None
    rows = [r for r in rows if r and not (len(r) == 1 and not r[0].strip())]
    if not rows:
        raise DataError(f"{path}: empty file")
    return [c.strip() for c in rows[0]], rows[1:]


def _read_table(path, key):
    """Per-key covariate table: header ``key,<cov...>``."""
    header, rows = _read_rows(path)
    if not header or header[0] != key:
        raise DataError(f"{path}: first column must be {key!r}")
    names = header[1:]
    out = {}
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path} line {i}: expected {len(header)} fields, got {len(row)}")
        k = row[0].strip()
        if k in out:
            raise DataError(f"{path} line {i}: duplicate {key} {k!r}")
        out[k] = [_parse_float(v, names[j], i) for j, v in enumerate(row[1:])]
    return names, out


def _interpolate_series(values):
    """Linear interpolation over the time index; ends take the nearest value."""
    idx = np.arange(values.size)
    ok = ~np.isnan(values)
    if not ok.any():
        return None
    return np.interp(idx, idx[ok], values[ok])


def load_dataset(path, var1_path=None, var2_path=None, interpolate_missing=False, intercept=True,
                 sites=None, times=None) -> SpatioTemporalDataset:
    """Read the long-format response CSV and optional variance-covariate tables.

    The main file has header ``site_id,lat,lon,time,z,<mean covariates>``
    with one row per (site, time). ``var1_path`` is a per-site table
    (``site_id,<covariates>``) and ``var2_path`` a per-time table
    (``time,<covariates>``). An intercept column is prepended to the mean
    design when ``intercept`` is true. ``sites``/``times`` restrict the
    result to the given labels.

    Missing responses (empty or ``NA``) raise unless ``interpolate_missing``
    is set, in which case each site's series is linearly interpolated over
    time, provided no more than 5% of all values are missing.

    Raises
    ------
    DataError
        On schema mismatch, duplicate (site, time) rows, malformed numbers,
        inconsistent coordinates, incomplete designs or too much missing data.
    """
    header, rows = _read_rows(path)
    if header[: len(BASE_COLUMNS)] != BASE_COLUMNS:
        raise DataError(f"{path}: header must start with {','.join(BASE_COLUMNS)}, got {','.join(header)}")
    cov_names = header[len(BASE_COLUMNS):]
    coords, records = {}, {}
    site_order, time_set = [], set()
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path} line {i}: expected {len(header)} fields, got {len(row)}")
        sid, lat, lon, tl, zt = (c.strip() for c in row[:5])
        if not sid or not tl:
            raise DataError(f"{path} line {i}: empty site_id or time")
        xy = (_parse_float(lat, "lat", i), _parse_float(lon, "lon", i))
        if not all(math.isfinite(c) for c in xy):
            raise DataError(f"{path} line {i}: coordinates are not finite")
        if sid in coords:
            if coords[sid] != xy:
                raise DataError(f"{path} line {i}: site {sid!r} has inconsistent coordinates")
        else:
            coords[sid] = xy
            site_order.append(sid)
        if (sid, tl) in records:
            raise DataError(f"{path} line {i}: duplicate row for site {sid!r} at time {tl!r}")
        z = math.nan if zt.lower() in MISSING_TOKENS else _parse_float(zt, "z", i)
        if math.isinf(z):
            raise DataError(f"{path} line {i}: z is infinite")
        covs = [_parse_float(v, cov_names[j], i) for j, v in enumerate(row[5:])]
        records[(sid, tl)] = (z, covs)
        time_set.add(tl)

    site_ids = site_order if sites is None else [str(s) for s in sites]
    time_labels = sorted(time_set, key=_time_key) if times is None else [str(t) for t in times]
    for s in site_ids:
        if s not in coords:
            raise DataError(f"{path}: site {s!r} not present")
    n, J, pc = len(site_ids), len(time_labels), len(cov_names)
    if n < 2 or J < 2:
        raise DataError(f"{path}: need at least 2 sites and 2 times, got {n} and {J}")

    z = np.full((J, n), np.nan)
    X = np.empty((J, n, pc))
    for t, tl in enumerate(time_labels):
        for i, s in enumerate(site_ids):
            rec = records.get((s, tl))
            if rec is None:
                raise DataError(f"{path}: no row for site {s!r} at time {tl!r}")
            z[t, i] = rec[0]
            X[t, i] = rec[1]
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: mean covariates are not finite")

    missing = np.isnan(z)
    if missing.any():
        where = np.argwhere(missing)[0]
        first = f"site {site_ids[where[1]]!r} at time {time_labels[where[0]]!r}"
        if not interpolate_missing:
            raise DataError(f"{path}: {int(missing.sum())} missing responses (first: {first})")
        frac = missing.mean()
        if frac > MAX_MISSING_FRACTION:
            raise DataError(f"{path}: {100 * frac:.1f}% of responses missing, above the 5% limit")
        for i in range(n):
            if missing[:, i].any():
                filled = _interpolate_series(z[:, i])
                if filled is None:
                    raise DataError(f"{path}: site {site_ids[i]!r} has no observed responses")
                z[:, i] = filled
        log.info("interpolated %d missing responses", int(missing.sum()))

    if intercept:
        X = np.concatenate([np.ones((J, n, 1)), X], axis=2)
        mean_names = ["intercept"] + cov_names
    else:
        mean_names = list(cov_names)

    X1 = None
    var1_names = []
    if var1_path is not None:
        var1_names, table = _read_table(var1_path, "site_id")
        try:
            X1 = np.array([table[s] for s in site_ids], dtype=float).reshape(n, -1)
        except KeyError as exc:
            raise DataError(f"{var1_path}: no row for site {exc.args[0]!r}") from None
    X2 = None
    var2_names = []
    if var2_path is not None:
        var2_names, table = _read_table(var2_path, "time")
        try:
            X2 = np.array([table[t] for t in time_labels], dtype=float).reshape(J, -1)
        except KeyError as exc:
            raise DataError(f"{var2_path}: no row for time {exc.args[0]!r}") from None

    times_out = [int(t) if _time_key(t)[0] == 0 else t for t in time_labels]
    return SpatioTemporalDataset(
        site_ids=list(site_ids),
        sites=SiteSet(np.array([coords[s] for s in site_ids], dtype=float)),
        times=times_out, z=z, X=X, X1=X1, X2=X2,
        mean_names=mean_names, var1_names=var1_names, var2_names=var2_names,
    )


def write_dataset(data: SpatioTemporalDataset, path, var1_path=None, var2_path=None):
    """Write ``data`` in the schema read by :func:`load_dataset`.

    A leading intercept column of the mean design is dropped.
    """
    drop = 1 if data.mean_names[:1] == ["intercept"] else 0
    names = data.mean_names[drop:] or [f"x{j}" for j in range(drop, data.p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BASE_COLUMNS + names)
        for i, s in enumerate(data.site_ids):
            lat, lon = data.sites.coords[i]
            for t, tl in enumerate(data.times):
                w.writerow([s, fmt(lat), fmt(lon), tl, fmt(data.z[t, i])] + [fmt(x) for x in data.X[t, i, drop:]])
    if var1_path is not None and data.X1 is not None:
        with open(var1_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["site_id"] + (data.var1_names or [f"v{j}" for j in range(data.X1.shape[1])]))
            for i, s in enumerate(data.site_ids):
                w.writerow([s] + [fmt(x) for x in data.X1[i]])
    if var2_path is not None and data.X2 is not None:
        with open(var2_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time"] + (data.var2_names or [f"v{j}" for j in range(data.X2.shape[1])]))
            for t, tl in enumerate(data.times):
                w.writerow([tl] + [fmt(x) for x in data.X2[t]])


# ---------------------------------------------------------------------------
# run configuration

_PRIOR_KEYS = {
    "prior.sigma2.a": "sigma2_a", "prior.sigma2.b": "sigma2_b",
    "prior.tau2.a": "tau2_a", "prior.tau2.b": "tau2_b",
    "prior.phi.c": "phi_c",
    "prior.alpha.lo": "alpha_lo", "prior.alpha.hi": "alpha_hi",
    "prior.gamma.a": "gamma_a", "prior.gamma.b": "gamma_b", "prior.gamma.c": "gamma_c",
    "prior.nu.a": "nu_a", "prior.nu.b": "nu_b",
}


@dataclass
class RunConfig:
    """Everything a CLI run needs. Paths are strings; ``None`` means unset."""

    model: str = "G"
    delta1: float = 0.99
    delta2: float = 0.99
    priors: dict = field(default_factory=dict)
    iters: int = 5000
    burnin: int = 2500
    thin: int = 5
    seed: int = 1
    lambda1_block: int = 1
    level: float = 0.05
    vs_order: float = 0.25
    vs_weights: str = "uniform"
    horizon: int = 0
    draws_per_sample: int = 1
    data: Optional[str] = None
    var1: Optional[str] = None
    var2: Optional[str] = None
    out: str = "."
    chain: Optional[str] = None
    predictions: Optional[str] = None
    holdout: Optional[str] = None
    interpolate_missing: bool = False
    study: str = "gaussian"
    sim_sites: int = 20
    sim_times: int = 100
    sim_holdout: int = 5

    def __post_init__(self):
        for name in ("iters", "thin", "lambda1_block", "draws_per_sample", "sim_sites", "sim_times"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("burnin", "horizon", "sim_holdout"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.model not in VARIANTS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {', '.join(VARIANTS)}")
        if not self.vs_order > 0:
            raise ConfigError("vs-order must be positive")
        if self.vs_weights not in ("uniform", "inverse_distance"):
            raise ConfigError("vs_weights must be 'uniform' or 'inverse_distance'")
        if self.study not in ("gaussian", "nongaussian"):
            raise ConfigError("study must be 'gaussian' or 'nongaussian'")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(variant=self.model, delta1=self.delta1, delta2=self.delta2,
                         priors=PriorSet(**self.priors), lambda1_block=self.lambda1_block)

    def holdout_ids(self) -> list:
        if not self.holdout:
            return []
        return [s.strip() for s in self.holdout.split(",") if s.strip()]


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {i}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {i}: empty key")
        if key in out:
            raise ConfigError(f"config line {i}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(name, value, kind):
    try:
        if kind is bool:
            low = str(value).lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {name!r}: cannot read {value!r}") from None


def build_config(entries: dict, overrides: Optional[dict] = None) -> RunConfig:
    """Turn parsed config entries plus CLI overrides into a :class:`RunConfig`."""
    types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {"int": int, "float": float, "bool": bool, "str": str, "Optional[str]": str}
    kw, priors = {}, {}
    merged = dict(entries)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key, value in merged.items():
        if key in _PRIOR_KEYS:
            priors[_PRIOR_KEYS[key]] = _coerce(key, value, float)
            continue
        name = key.replace("-", "_").replace(".", "_")
        if name not in types or name == "priors":
            raise ConfigError(f"unknown config key {key!r}")
        kw[name] = value if not isinstance(value, str) else _coerce(key, value, kinds[types[name]])
    try:
        PriorSet(**priors)
        return RunConfig(priors=priors, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return build_config(parse_config_text(path.read_text()), overrides)


# ---------------------------------------------------------------------------
# binary array streams


def _write_arrays(path, arrays: dict) -> str:
    """Sequential ``np.save`` of named arrays; returns the sha256 of the file."""
    with open(path, "wb") as fh:
        np.save(fh, np.array(list(arrays.keys())), allow_pickle=False)
        for arr in arrays.values():
            np.save(fh, np.ascontiguousarray(arr), allow_pickle=False)
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_arrays(path, error=ChainFormatError) -> dict:
    try:
        with open(path, "rb") as fh:
            names = [str(s) for s in np.load(fh, allow_pickle=False)]
            return {nm: np.load(fh, allow_pickle=False) for nm in names}
    except FileNotFoundError:
        raise error(f"binary file not found: {path}") from None
    except (ValueError, EOFError, OSError) as exc:
        raise error(f"{path}: corrupt or truncated binary data ({exc})") from None


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# chains


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".paths.bin")


def persist_chain(post: PosteriorSamples, path) -> None:
    """Write the chain as a versioned CSV of scalars plus a binary sidecar of paths."""
    path = Path(path)
    side = sidecar_path(path)
    arrays = {"theta": post.theta, "log_lam1": post.log_lam1, "log_lam2": post.log_lam2,
              "W_theta_next": post.W_theta_next, "beta": post.beta}
    if post.eta is not None:
        arrays["eta"] = post.eta
        arrays["W_eta_next"] = post.W_eta_next
    digest = _write_arrays(side, arrays)
    meta = {
        "seed": post.seed, "data_hash": post.data_hash, "fingerprint": post.fingerprint, "spec": post.spec,
        "iters": post.iters, "burnin": post.burnin, "thin": post.thin, "site_ids": post.site_ids,
        "times": post.times, "acceptance": post.acceptance, "draws": post.n_draws,
        "sidecar": side.name, "sidecar_sha256": digest,
    }
    p1 = post.beta.shape[1]
    summ = post.lambda_summaries()
    cols = ["draw", *STATIC_NAMES, *[f"beta_{j + 1}" for j in range(p1)], "log_post", "lam1_mean", "lam2_mean"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CHAIN_FORMAT} version {CHAIN_VERSION}\n")
        fh.write("# meta " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k in range(post.n_draws):
            w.writerow([k] + [fmt(post.statics[nm][k]) for nm in STATIC_NAMES] + [fmt(b) for b in post.beta[k]]
                       + [fmt(post.log_post[k]), fmt(summ["lam1_mean"][k]), fmt(summ["lam2_mean"][k])])
        fh.write(f"# end draws={post.n_draws}\n")


def load_chain(path) -> PosteriorSamples:
    """Read a chain written by :func:`persist_chain`.

    Raises
    ------
    ChainVersionError
        If the file declares another format version.
    ChainFormatError
        If either file is missing, truncated or inconsistent.
    """
    path = Path(path)
    if not path.is_file():
        raise ChainFormatError(f"chain file not found: {path}")
    try:
        lines = path.read_text().splitlines()
    except UnicodeDecodeError:
        raise ChainFormatError(f"{path}: not a text chain file") from None
    if not lines or not lines[0].startswith(f"# {CHAIN_FORMAT} version "):
        raise ChainFormatError(f"{path}: missing chain format header")
    try:
        version = int(lines[0].rsplit(" ", 1)[1])
    except ValueError:
        raise ChainFormatError(f"{path}: unreadable format version") from None
    if version != CHAIN_VERSION:
        raise ChainVersionError(f"{path}: chain format version {version}, this reader handles {CHAIN_VERSION}")
    if len(lines) < 4 or not lines[1].startswith("# meta ") or not lines[-1].startswith("# end draws="):
        raise ChainFormatError(f"{path}: truncated chain file")
    try:
        meta = json.loads(lines[1][len("# meta "):])
        K = int(lines[-1].split("=", 1)[1])
    except (ValueError, json.JSONDecodeError):
        raise ChainFormatError(f"{path}: corrupt chain metadata") from None
    body = list(csv.reader(lines[2:-1]))
    header, rows = body[0], body[1:]
    if len(rows) != K or K != meta.get("draws"):
        raise ChainFormatError(f"{path}: expected {K} draws, found {len(rows)}")
    try:
        table = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(K, len(header))
    except ValueError:
        raise ChainFormatError(f"{path}: malformed draw rows") from None
    col = {nm: j for j, nm in enumerate(header)}
    missing = [nm for nm in (*STATIC_NAMES, "log_post") if nm not in col]
    if missing:
        raise ChainFormatError(f"{path}: missing columns {missing}")

    side = path.with_name(meta["sidecar"])
    if not side.is_file():
        raise ChainFormatError(f"{path}: sidecar {side.name} not found")
    if _sha256(side) != meta["sidecar_sha256"]:
        raise ChainFormatError(f"{side}: sidecar does not match its chain file")
    arrays = _read_arrays(side)
    beta = arrays["beta"]
    beta_cols = [nm for nm in header if nm.startswith("beta_")]
    if beta.shape != (K, len(beta_cols)) or arrays["theta"].shape[0] != K:
        raise ChainFormatError(f"{side}: array shapes do not match the chain file")
    post = PosteriorSamples(
        statics={nm: table[:, col[nm]].copy() for nm in STATIC_NAMES},
        beta=beta, theta=arrays.get("theta"), eta=arrays.get("eta"), log_lam1=arrays["log_lam1"],
        log_lam2=arrays["log_lam2"], W_theta_next=arrays["W_theta_next"], W_eta_next=arrays.get("W_eta_next"),
        log_post=table[:, col["log_post"]].copy(), acceptance=meta["acceptance"], spec=meta["spec"],
        seed=meta["seed"], data_hash=meta["data_hash"], site_ids=meta["site_ids"], times=meta["times"],
        iters=meta["iters"], burnin=meta["burnin"], thin=meta["thin"],
    )
    if post.fingerprint != meta["fingerprint"]:
        raise ChainFormatError(f"{path}: fingerprint does not match its contents")
    return post


# ---------------------------------------------------------------------------
# predictions and scores


def persist_predictions(draws, path, meta: Optional[dict] = None) -> None:
    from .predict import PredictiveDraws  # noqa: F401  (type only)

    arrays = {"z": draws.z, "mean": draws.mean, "cov": draws.cov, "log_lam1": draws.log_lam1,
              "log_lam2": draws.log_lam2}
    for name in ("theta", "eta"):
        if getattr(draws, name) is not None:
            arrays[name] = getattr(draws, name)
    path = Path(path)
    digest = _write_arrays(path, arrays)
    info = {"format": PRED_FORMAT, "version": PRED_VERSION, "site_ids": draws.site_ids,
            "times": draws.times, "sha256": digest, **(meta or {})}
    path.with_suffix(".json").write_text(json.dumps(info, sort_keys=True, indent=1) + "\n")


def load_predictions(path):
    from .predict import PredictiveDraws

    path = Path(path)
    info_path = path.with_suffix(".json")
    if not info_path.is_file():
        raise DataError(f"prediction metadata {info_path} not found")
    try:
        info = json.loads(info_path.read_text())
    except json.JSONDecodeError:
        raise DataError(f"{info_path}: corrupt metadata") from None
    if info.get("format") != PRED_FORMAT:
        raise DataError(f"{info_path}: not a predictions file")
    if info.get("version") != PRED_VERSION:
        raise ChainVersionError(f"{info_path}: predictions format version {info.get('version')}")
    arrays = _read_arrays(path, error=DataError)
    return PredictiveDraws(z=arrays["z"], mean=arrays["mean"], cov=arrays["cov"], log_lam1=arrays["log_lam1"],
                           log_lam2=arrays["log_lam2"], theta=arrays.get("theta"), eta=arrays.get("eta"),
                           site_ids=info["site_ids"], times=info["times"])


def write_summary(summary: dict, site_ids, times, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "time", "mean", "sd", "lower", "upper"])
        for t, tl in enumerate(times):
            for i, s in enumerate(site_ids):
                w.writerow([s, tl] + [fmt(summary[k][t, i]) for k in ("mean", "sd", "lower", "upper")])


def write_scores(report, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["criterion", "site_id", "time", "value"])
        for crit, site, tl, value in report.rows():
            w.writerow([crit, site, tl, fmt(value)])


def read_scores(path) -> dict:
    """Totals from a score table, keyed by criterion."""
    header, rows = _read_rows(path)
    if header != ["criterion", "site_id", "time", "value"]:
        raise DataError(f"{path}: not a score table")
    return {r[0]: float(r[3]) for r in rows if r[2] == "total"}


def write_table(rows: list, columns: list, path) -> None:
    """Plain CSV with floats written exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
