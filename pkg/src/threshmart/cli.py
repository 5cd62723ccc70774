"""Command line entry point: ``threshmart <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 data or schema problem, 4 numerical failure.
The default output directory is ``./out``, overridable with ``THRESHMART_OUTDIR``.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import (calibration_regression, calibration_scatter,
                          ols_vs_prequential_contrast, polynomial_calibration,
                          total_volatility_test)
from .errors import (DivergenceError, DomainError, IncompletePathError, SchemaError,
                     SingularDesignError, UndefinedStatisticError)
from .martingale_filter import FilterModel
from .stochastic_sim import (ArSpec, EnsembleConfig, calibrate_drift, home_win_probability,
                             make_games, sample_ensemble, simulate_ar1, stationary_sd)
from .threshold_martingale import (compensated_volatility, ensemble_prob_paths,
                                   quadratic_variation, threshold_path)
from .winprob_models import (FilteredModel, evaluate, fit_filtered, fit_simple, fit_weighted,
                             model_from_dict)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
OUTDIR_ENV = "THRESHMART_OUTDIR"


class UsageError(Exception):
    pass


def _outdir(args) -> Path:
    return Path(args.out or os.environ.get(OUTDIR_ENV, "out"))


def _config(args) -> dict:
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} is stochastic; --seed is required")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _pairs(text: str) -> list:
    out = []
    for item in text.split(","):
        try:
            s, t = item.split(":")
            out.append((int(s), int(t)))
        except ValueError:
            raise UsageError(f"expected s:t pairs, got {item!r}") from None
    return out


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _write_paths(out: Path, ids, ys, probs, config):
    io.write_csv(out / "series.csv", io.SERIES_COLUMNS,
                 ((sid, t + 1, v) for sid, y in zip(ids, ys) for t, v in enumerate(y)), config)
    io.write_csv(out / "probs.csv", io.PROB_COLUMNS, io.prob_rows(ids, probs), config)

    def vol_rows():
        for sid, p in zip(ids, probs):
            for t, (s, v) in enumerate(zip(quadratic_variation(p), compensated_volatility(p))):
                yield sid, t, s, v

    io.write_csv(out / "volatility.csv", io.VOLATILITY_COLUMNS, vol_rows(), config)


def cmd_simulate(args) -> int:
    _require_seed(args)
    out, config = _outdir(args), _config(args)
    if args.ensemble:
        a, b = args.beta
        ens = sample_ensemble(EnsembleConfig(n_series=args.n, beta_a=a, beta_b=b,
                                             target_pi=args.pi, T=args.T,
                                             sigma_eps=args.sigma, master_seed=args.seed))
        paths = ensemble_prob_paths(ens)
        ids = [f"s{j:05d}" for j in range(args.n)]
        _write_paths(out, ids, [p.values for p in ens.paths], [p.probs for p in paths], config)
        pi = args.pi
        summary = {"pi": pi, "target_volatility": pi * (1 - pi), "n_series": args.n,
                   "rho": ens.rhos, "tau": ens.taus}
    else:
        if args.rho is None or args.tau is None:
            raise UsageError("single-series simulate needs --rho and --tau (or use --ensemble)")
        spec = ArSpec(args.rho, args.sigma, args.T)
        path = simulate_ar1(spec, args.seed)
        pp = threshold_path(path, args.tau)
        _write_paths(out, ["s00000"], [path.values], [pp.probs], config)
        pi = pp.pi
        summary = {"pi": pi, "target_volatility": pi * (1 - pi), "n_series": 1,
                   "stationary_sd": stationary_sd(args.rho, args.sigma)}
    io.write_json(out / "simulate.json", summary, config)
    print(f"pi = {pi:.6f}")
    print(f"target total volatility pi(1-pi) = {pi * (1 - pi):.6f}")
    return 0


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def cmd_diagnose(args) -> int:
    out, config = _outdir(args), _config(args)
    table = io.read_prob_paths(args.input)
    ids = list(table)
    lengths = {len(p) for p in table.values()}
    if len(lengths) != 1:
        raise SchemaError(f"{args.input}: series have differing lengths {sorted(lengths)}")
    paths = np.vstack(list(table.values()))
    T = paths.shape[1] - 1
    starts = paths[:, 0]
    if args.pi is not None:
        pi = args.pi
    elif np.all(starts == starts[0]):
        pi = float(starts[0])
    else:
        raise UsageError("series start at different probabilities; pass --pi")
    t = args.t if args.t is not None else T - 5
    lags = _int_list(args.lags)
    report = {}

    cal = calibration_regression(paths, t, lags, difference_lag=1)
    level = calibration_regression(paths, t, (1,), difference_lag=None)
    report["calibration"] = {"difference": cal.to_dict(), "level": level.to_dict()}
    try:
        report["calibration"]["polynomial"] = polynomial_calibration(
            paths, t - 1, t, degree=args.poly_degree).to_dict()
    except SingularDesignError as exc:
        report["calibration"]["polynomial"] = {"error": str(exc)}

    vol = total_volatility_test(paths, pi)
    report["volatility"] = vol.to_dict()

    preq = ols_vs_prequential_contrast(np.diff(paths, axis=1), args.preq_lag, args.burn_in)
    report["prequential"] = preq.to_dict()
    io.write_json(out / "diagnose.json", report, config)

    pairs = _pairs(args.scatter) if args.scatter else [(t - 1, t), (max(t - 10, 1), t)]
    rows = []
    for s, tt in pairs:
        rows.extend(calibration_scatter(paths, s, tt).rows())
    io.write_csv(out / "scatter.csv", io.SCATTER_COLUMNS, rows, config)
    io.write_csv(out / "boxplot.csv", io.BOXPLOT_COLUMNS,
                 ((ids[j], stat, v) for j, stat, v in preq.rows()), config)

    print(f"calibration: Wald chi2 = {cal.wald:.4f} on {cal.df} df, p = {cal.p_value:.4f}")
    print(f"level regression: slope = {level.slope:.4f}, intercept t = {level.robust_t[0]:.3f}")
    print(f"total volatility: mean = {vol.mean_total:.5f} (target {vol.target:.5f}), "
          f"z = {vol.z:.3f} [{'pass' if vol.passed else 'FAIL'}]")
    print(f"prequential R2 (lag {preq.lag}): {preq.fraction_negative:.1%} negative, "
          f"median {preq.median_prequential:.4f} vs OLS median {preq.median_ols:.4f}")
    return 0


# ---------------------------------------------------------------------------
# games
# ---------------------------------------------------------------------------

def cmd_make_games(args) -> int:
    _require_seed(args)
    out, config = _outdir(args), _config(args)
    if args.drift is not None:
        drift = args.drift
    else:
        drift = calibrate_drift(args.home_rate, args.step_sd, args.steps, args.home_advantage)
    games = make_games(args.n, drift, args.step_sd, args.seed, season=args.season,
                       n_steps=args.steps, home_advantage_prob=args.home_advantage,
                       id_prefix=args.prefix)
    path = out / args.name
    io.write_csv(path, io.GAME_COLUMNS, io.game_rows(games), config)
    exact = home_win_probability(drift, args.step_sd, args.steps, args.home_advantage)
    rate = np.mean([g.home_win for g in games])
    print(f"drift = {drift:.10f}; exact home-win probability {exact:.4f}; "
          f"observed {rate:.4f} over {len(games)} games -> {path}")
    return 0


def _fit_models(train, degree, tol, clip):
    simple = fit_simple(train)
    weighted = fit_weighted(train, degree)
    return simple, weighted, fit_filtered(weighted, train, tol=tol, clip=clip)


def _filtered_dict(f: FilteredModel) -> dict:
    return {"kind": "filtered", "base": f.base.to_dict(), "filter": f.filter.to_dict(),
            "clip": f.clip}


def _load_model(path):
    d = io.read_json(path)
    try:
        if d.get("kind") == "filtered":
            return FilteredModel(model_from_dict(d["base"]), FilterModel.from_dict(d["filter"]),
                                 bool(d["clip"]))
        return model_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: not a saved model ({exc})") from None


def _weight_rows(weighted):
    t = np.linspace(weighted.time_range[0], weighted.time_range[1], 193)
    for ti, w, b in zip(t, weighted.weight_curve(t), weighted.baseline(t)):
        yield ti, w, b


def cmd_fit(args) -> int:
    out, config = _outdir(args), _config(args)
    train = io.read_games(args.train)
    simple = fit_simple(train)
    weighted = fit_weighted(train, args.degree)
    io.write_json(out / "model_simple.json", simple.to_dict(), config)
    io.write_json(out / "model_weighted.json", weighted.to_dict(), config)
    io.write_csv(out / "weight_curve.csv", ["t_min", "w", "baseline"], _weight_rows(weighted),
                 config)
    print(f"simple: alpha0 = {simple.alpha0:.4f}, alpha1 = {simple.alpha1:.4f} "
          f"({simple.caveat})")
    print(f"weighted: degree {weighted.degree}, {weighted.n_obs} cells")
    return 0


def cmd_filter(args) -> int:
    out, config = _outdir(args), _config(args)
    train = io.read_games(args.train)
    base = _load_model(args.model)
    filt = fit_filtered(base, train, tol=args.tol, clip=args.clip)
    io.write_json(out / "model_filtered.json", _filtered_dict(filt), config)
    print(f"filter: {int(filt.filter.retained.sum())} of {filt.filter.T + 1} directions retained")
    return 0


def cmd_evaluate(args) -> int:
    out, config = _outdir(args), _config(args)
    test = io.read_games(args.test)
    if args.train:
        simple, weighted, filt = _fit_models(io.read_games(args.train), args.degree,
                                             args.tol, args.clip)
        models = {"simple": simple, "weighted": weighted, "filtered": filt}
        io.write_json(out / "model_simple.json", simple.to_dict(), config)
        io.write_json(out / "model_weighted.json", weighted.to_dict(), config)
        io.write_json(out / "model_filtered.json", _filtered_dict(filt), config)
    elif args.models:
        models = {}
        for spec in args.models:
            name, _, path = spec.partition("=")
            if not path:
                raise UsageError(f"--models entries look like name=path, got {spec!r}")
            models[name] = _load_model(path)
    else:
        raise UsageError("evaluate needs --train (fit everything) or --models name=path ...")
    table = evaluate(models, test)
    summary = table.summary()
    io.write_json(out / "evaluation.json",
                  {"summary": summary, "comparisons": table.comparisons}, config)

    def per_game():
        for i, gid in enumerate(table.game_ids):
            for k, name in enumerate(table.names):
                yield gid, name, table.mse[i, k], table.volatility[i, k]

    io.write_csv(out / "per_game.csv", ["game_id", "predictor", "mse", "volatility"],
                 per_game(), config)
    print(f"{'predictor':<12}{'count':>7}{'avg MSE':>10}{'avg volatility':>16}  95% interval")
    for row in summary:
        lo, hi = row["volatility_ci95"]
        print(f"{row['predictor']:<12}{row['count']:>7}{row['mse']:>10.4f}"
              f"{row['volatility']:>16.4f}  [{lo:.3f}, {hi:.3f}]")
    for c in table.comparisons:
        print(f"{c['a']} - {c['b']}: MSE diff {c['mse_diff']:.5f} (z = {c['mse_z']:.2f}), "
              f"volatility diff {c['volatility_diff']:.4f} (z = {c['volatility_z']:.2f})")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="threshmart", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False):
        sp.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or ./out)")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed (required)")
        return sp

    s = common(sub.add_parser("simulate", help="AR(1) series and threshold probability paths"),
               seed=True)
    s.add_argument("--ensemble", action="store_true", help="simulate a Beta-mixed ensemble")
    s.add_argument("--rho", type=float)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--tau", type=float)
    s.add_argument("--T", type=int, default=40)
    s.add_argument("--n", type=int, default=250)
    s.add_argument("--beta", type=float, nargs=2, default=[8.0, 2.0], metavar=("A", "B"))
    s.add_argument("--pi", type=float, default=0.75)
    s.set_defaults(func=cmd_simulate)

    d = common(sub.add_parser("diagnose", help="calibration, volatility and R2 diagnostics"))
    d.add_argument("--input", required=True, help="probability path CSV")
    d.add_argument("--pi", type=float, help="initial probability (default: common p at t=0)")
    d.add_argument("--t", type=int, help="response time (default T-5)")
    d.add_argument("--lags", default="2,5", help="regressor times before t, e.g. 2,5")
    d.add_argument("--poly-degree", type=int, default=5)
    d.add_argument("--preq-lag", type=int, default=4)
    d.add_argument("--burn-in", type=int)
    d.add_argument("--scatter", help="lag pairs s:t for scatter data, e.g. 34:35,25:35")
    d.set_defaults(func=cmd_diagnose)

    g = common(sub.add_parser("make-games", help="synthetic score-path corpus"), seed=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--step-sd", type=float, default=0.9)
    g.add_argument("--home-rate", type=float, default=0.585,
                   help="calibrate the drift to this home-win probability")
    g.add_argument("--drift", type=float, help="use this drift instead of calibrating")
    g.add_argument("--steps", type=int, default=192)
    g.add_argument("--home-advantage", type=float, default=0.5,
                   help="home win probability when the final margin is tied")
    g.add_argument("--season", default="")
    g.add_argument("--prefix", default="g")
    g.add_argument("--name", default="games.csv")
    g.set_defaults(func=cmd_make_games)

    f = common(sub.add_parser("fit", help="fit simple and time-weighted logistic models"))
    f.add_argument("--train", required=True)
    f.add_argument("--degree", type=int, default=7)
    f.set_defaults(func=cmd_fit)

    fl = common(sub.add_parser("filter", help="fit a martingale filter to a model's predictions"))
    fl.add_argument("--train", required=True)
    fl.add_argument("--model", required=True, help="saved model JSON to filter")
    fl.add_argument("--tol", type=float, default=1e-8)
    fl.add_argument("--clip", action="store_true")
    fl.set_defaults(func=cmd_filter)

    e = common(sub.add_parser("evaluate", help="per-game MSE and volatility on test games"))
    e.add_argument("--test", required=True)
    e.add_argument("--train", help="fit simple, weighted and filtered models on these games")
    e.add_argument("--models", nargs="+", metavar="NAME=PATH", help="saved models to compare")
    e.add_argument("--degree", type=int, default=7)
    e.add_argument("--tol", type=float, default=1e-8)
    e.add_argument("--clip", action="store_true")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularDesignError, DivergenceError, UndefinedStatisticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IncompletePathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
