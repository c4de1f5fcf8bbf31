"""Command-line entry point: simulate, fit, predict, score, diagnose.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .dataset import SpatioTemporalDataset
from .diagnostics import MIN_LENGTH, effective_sample_size, geweke_z
from .errors import (
    ChainFormatError,
    ConfigError,
    DataError,
    DegenerateChainError,
    DynGLGError,
    PreconditionError,
    TaskSpecificationError,
)
from .model import Variant
from .predict import PredictionTask, forecast_time, interpolate_space, predictive_summary
from .sampler import PosteriorSamples, run_chain
from .scoring import inverse_distance_weights, score_predictions
from .simulate import gaussian_study_plan, nongaussian_study_plan, simulate_dataset
from .spatial_cov import distance_matrix

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("simulate", "fit", "predict", "score", "diagnose")

log = logging.getLogger("dynglg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--data", help="long-format response CSV")
    common.add_argument("--var1", help="per-site spatial-variance covariate CSV")
    common.add_argument("--var2", help="per-time temporal-variance covariate CSV")
    common.add_argument("--out", help="output directory")
    common.add_argument("--model", help="model variant")
    common.add_argument("--iters", type=int)
    common.add_argument("--burnin", type=int)
    common.add_argument("--thin", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--level", type=float, help="interval level gamma (0.05 gives 95%% intervals)")
    common.add_argument("--vs-order", type=float, help="variogram score order p")
    common.add_argument("--horizon", type=int, help="forecast steps; for fit, trailing times left out")
    common.add_argument("--holdout", help="comma-separated site ids left out of fitting")
    common.add_argument("--chain", help="chain CSV written by fit")
    common.add_argument("--predictions", help="predictions file written by predict")
    common.add_argument("--study", choices=["gaussian", "nongaussian"], help="simulation design")
    common.add_argument("--interpolate-missing", action="store_true", default=None,
                        help="fill up to 5%% missing responses by linear interpolation over time")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="dynglg", description="Dynamic non-Gaussian spatio-temporal models.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    helps = {
        "simulate": "simulate a dataset with its latent truth",
        "fit": "run the MCMC sampler and store the chain",
        "predict": "predictive draws at held-out sites or future times",
        "score": "interval, log predictive and variogram scores",
        "diagnose": "convergence report for a stored chain",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _config(args) -> io.RunConfig:
    overrides = {
        "data": args.data, "var1": args.var1, "var2": args.var2, "out": args.out, "model": args.model,
        "iters": args.iters, "burnin": args.burnin, "thin": args.thin, "seed": args.seed, "level": args.level,
        "vs_order": args.vs_order, "horizon": args.horizon, "holdout": args.holdout, "chain": args.chain,
        "predictions": args.predictions, "study": args.study, "interpolate_missing": args.interpolate_missing,
    }
    if args.config:
        return io.load_config(args.config, overrides)
    return io.build_config({}, overrides)


def _need(cfg, *names):
    for nm in names:
        if getattr(cfg, nm) in (None, ""):
            raise UsageError(f"--{nm.replace('_', '-')} is required for this command")


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(cfg) -> SpatioTemporalDataset:
    return io.load_dataset(cfg.data, cfg.var1, cfg.var2, interpolate_missing=cfg.interpolate_missing)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: io.RunConfig) -> None:
    out = _outdir(cfg)
    make = gaussian_study_plan if cfg.study == "gaussian" else nongaussian_study_plan
    plan = make(n_sites=cfg.sim_sites, J=cfg.sim_times, n_holdout=cfg.sim_holdout)
    data, truth = simulate_dataset(np.random.default_rng(cfg.seed), plan)
    io.write_dataset(data, out / "data.csv", out / "var_site.csv", out / "var_time.csv")
    (out / "holdout.txt").write_text(",".join(data.site_ids[i] for i in truth["holdout"]) + "\n")
    io._write_arrays(out / "truth.bin", {k: truth[k] for k in ("theta", "eta", "log_lam1", "log_lam2", "mean")})
    io.write_table([[k, v] for k, v in truth["statics"].scalars().items()], ["parameter", "value"], out / "truth.csv")
    log.info("simulated %d sites x %d times into %s", data.n, data.J, out)


def _training_split(full: SpatioTemporalDataset, holdout_ids, horizon):
    hold = set(holdout_ids)
    unknown = hold - set(full.site_ids)
    if unknown:
        raise DataError(f"held-out site ids not in data: {sorted(unknown)}")
    site_idx = [i for i, s in enumerate(full.site_ids) if s not in hold]
    if horizon >= full.J - 1:
        raise DataError(f"horizon {horizon} leaves fewer than 2 training times")
    time_idx = np.arange(full.J - horizon)
    return full.subset(site_idx, time_idx)


def diagnostics_rows(post: PosteriorSamples) -> list:
    variant = Variant(post.spec["variant"])
    series = {nm: post.statics[nm] for nm in variant.static_blocks()}
    for j in range(post.beta.shape[1]):
        series[f"beta_{j + 1}"] = post.beta[:, j]
    series["log_post"] = post.log_post
    rows = []
    for nm, x in series.items():
        gz = ess = float("nan")
        if x.size >= MIN_LENGTH:
            try:
                gz = geweke_z(x)
            except DegenerateChainError:
                pass
            ess = effective_sample_size(x)
        lo, hi = np.quantile(x, [0.025, 0.975]) if x.size else (np.nan, np.nan)
        rows.append([nm, float(np.mean(x)), float(np.std(x)), float(lo), float(hi), gz, ess,
                     float(post.acceptance.get(nm, float("nan")))])
    return rows


DIAG_COLUMNS = ["parameter", "mean", "sd", "q025", "q975", "geweke_z", "ess", "acceptance"]


def cmd_fit(cfg: io.RunConfig) -> None:
    _need(cfg, "data")
    out = _outdir(cfg)
    full = _load(cfg)
    train = _training_split(full, cfg.holdout_ids(), cfg.horizon)
    spec = cfg.model_spec()
    post = run_chain(cfg.seed, train, spec, cfg.iters, cfg.burnin, cfg.thin)
    io.persist_chain(post, out / "chain.csv")
    io.write_table(sorted(post.acceptance.items()), ["block", "acceptance"], out / "acceptance.csv")
    io.write_table(diagnostics_rows(post), DIAG_COLUMNS, out / "diagnostics.csv")
    log.info("stored %d draws in %s", post.n_draws, out / "chain.csv")


def cmd_predict(cfg: io.RunConfig) -> None:
    _need(cfg, "data", "chain")
    out = _outdir(cfg)
    post = io.load_chain(cfg.chain)
    full = _load(cfg)
    lookup = {s: i for i, s in enumerate(full.site_ids)}
    time_lookup = {t: j for j, t in enumerate(full.times)}
    try:
        site_idx = [lookup[s] for s in post.site_ids]
        time_idx = [time_lookup[t] for t in post.times]
    except KeyError as exc:
        raise DataError(f"data file lacks {exc.args[0]!r} used by the chain") from None
    train = full.subset(site_idx, time_idx)
    if post.data_hash != train.content_hash():
        raise PreconditionError("chain was fitted to different data (data hash mismatch)")

    targets = cfg.holdout_ids() or [s for s in full.site_ids if s not in set(post.site_ids)]
    h = cfg.horizon
    if not targets:
        if h == 0:
            raise TaskSpecificationError("no target sites: pass --holdout or a data file with extra sites")
        targets = list(post.site_ids)
    tidx = [lookup[s] for s in targets] if all(s in lookup for s in targets) else None
    if tidx is None:
        raise DataError("target site ids not in data")
    rng = np.random.default_rng(cfg.seed)
    if h == 0:
        task = PredictionTask(
            target_ids=targets, target_sites=full.sites.subset(tidx), X=full.X[np.ix_(time_idx, tidx)],
            X1=None if full.X1 is None else full.X1[tidx], draws_per_sample=cfg.draws_per_sample,
        )
        draws = interpolate_space(rng, post, train, task)
    else:
        last = time_idx[-1]
        future = list(range(last + 1, min(last + 1 + h, full.J)))
        if len(future) < h:
            raise TaskSpecificationError(f"data file has covariates for {len(future)} of {h} future times")
        task = PredictionTask(
            target_ids=targets, target_sites=full.sites.subset(tidx), X=full.X[np.ix_(future, tidx)], horizon=h,
            X1=None if full.X1 is None else full.X1[tidx], X2=None if full.X2 is None else full.X2[future],
            draws_per_sample=cfg.draws_per_sample,
        )
        draws = forecast_time(rng, post, train, task)
        draws.times = [full.times[j] for j in future]
    io.persist_predictions(draws, out / "predictions.bin", {"chain_fingerprint": post.fingerprint})
    summary = predictive_summary(draws, cfg.level)
    io.write_summary(summary, draws.site_ids, draws.times, out / "summary.csv")


def cmd_score(cfg: io.RunConfig) -> None:
    _need(cfg, "data", "predictions")
    out = _outdir(cfg)
    draws = io.load_predictions(cfg.predictions)
    full = _load(cfg)
    lookup = {s: i for i, s in enumerate(full.site_ids)}
    tlookup = {t: j for j, t in enumerate(full.times)}
    try:
        si = [lookup[s] for s in draws.site_ids]
        ti = [tlookup[t] for t in draws.times]
    except KeyError as exc:
        raise DataError(f"data file lacks {exc.args[0]!r} covered by the predictions") from None
    z_obs = full.z[np.ix_(ti, si)]
    w = None
    if cfg.vs_weights == "inverse_distance":
        c = full.sites.coords[si]
        w = inverse_distance_weights(distance_matrix(c))
    report = score_predictions(draws, z_obs, cfg.level, cfg.vs_order, w)
    io.write_scores(report, out / "scores.csv")
    for name, value in report.totals().items():
        log.info("%s total %.6g", name, value)


def cmd_diagnose(cfg: io.RunConfig) -> None:
    _need(cfg, "chain")
    out = _outdir(cfg)
    post = io.load_chain(cfg.chain)
    io.write_table(diagnostics_rows(post), DIAG_COLUMNS, out / "diagnostics.csv")


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict, "score": cmd_score,
            "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"dynglg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        print(parser.format_help(), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        HANDLERS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"dynglg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ChainFormatError, PreconditionError, TaskSpecificationError, FileNotFoundError) as exc:
        print(f"dynglg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DynGLGError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"dynglg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"dynglg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
