"""Command-line pipeline: ingest, derive, regress, bootstrap, calibrate, simulate, validate, report.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical or
constraint error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, NumericalError

logger = logging.getLogger("cape_returns")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def parse_horizons(text: str) -> list[int]:
    """``24:192`` (inclusive), ``24:192:24`` or ``24,48,96``."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                lo, hi, step = parts[0], parts[1], 1
            elif len(parts) == 3:
                lo, hi, step = parts
            else:
                raise ValueError
            if step < 1:
                raise ValueError
            out = list(range(lo, hi + 1, step))
        else:
            out = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad horizon spec {text!r}; use 24:192, 24:192:24 or 24,48,96") from None
    if not out or min(out) < 1:
        raise ConfigError(f"horizons must be positive integers, got {text!r}")
    return out


def _date(text):
    from .market_data import parse_date

    try:
        return parse_date(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _output_dir(args) -> Path:
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _require_seed(args) -> int:
    if args.seed is None:
        raise ConfigError(f"'{args.command}' is stochastic: pass --seed")
    if args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    return args.seed


def _require_input(args) -> Path:
    if not args.input:
        raise ConfigError(f"'{args.command}' needs --input")
    path = Path(args.input)
    if not path.exists():
        raise DataError(f"input file {path} not found")
    return path


def _load(args):
    from .market_data import load_column_map, load_market

    cmap = load_column_map(args.columns) if args.columns else None
    return load_market(_require_input(args), cmap, base_month=args.base_month,
                       log_ep_source=args.log_ep_source)


def _start(args):
    from .calibration import market_preset

    if args.start is not None:
        return args.start
    if args.market:
        return market_preset(args.market).start
    return None


def _clip_start(series, start):
    if start is not None and start.index() < series.dates[0].index():
        logger.info("start %s precedes the sample; using the first month", start)
        return None
    return start


def _regression_series(args, series):
    from .calibration import estimate_predictive_coefficients

    return estimate_predictive_coefficients(series, args.horizon, args.mode, _clip_start(series, _start(args)))


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    from .market_data import load_column_map, parse_market_csv, write_records_csv

    cmap = load_column_map(args.columns) if args.columns else None
    records = parse_market_csv(_require_input(args), cmap)
    out = _output_dir(args)
    write_records_csv(records, out / "records.csv")
    print(f"{len(records)} months {records[0].date}..{records[-1].date} -> {out / 'records.csv'}")
    return EXIT_OK


def cmd_derive(args) -> int:
    from .market_data import write_derived_csv

    series = _load(args)
    out = _output_dir(args)
    write_derived_csv(series, out / "derived.csv")
    print(f"{len(series)} months, base {series.base_month} -> {out / 'derived.csv'}")
    return EXIT_OK


def cmd_regress(args) -> int:
    from .regression import format_record

    series = _load(args)
    pred = _regression_series(args, series)
    out = _output_dir(args)
    text = pred.table()
    rec = ""
    for name, fit in (("gross", pred.gross), ("price", pred.price), ("dividend", pred.dividend)):
        rec += format_record(fit, scale=12e4, prefix=f"{name}.")
    (out / "regression.txt").write_text(text)
    (out / "regression_record.txt").write_text(f"units = yearly 1e-4\nmode = {args.mode}\n" + rec)
    print(text, end="")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    from .bootstrap import BootstrapConfig, run_bootstrap, write_samples_csv, write_summary
    from .calibration import predictive_sample

    seed = _require_seed(args)
    if args.mode != "nonoverlapping":
        raise ConfigError("the bootstrap rebuilds a chained AR(1) regressor; use --mode nonoverlapping")
    series = _load(args)
    _, x, ys = predictive_sample(series, args.horizon, args.mode, _clip_start(series, _start(args)))
    y = ys[("gross", "price", "dividend").index(args.series)]
    res = run_bootstrap(y, x, BootstrapConfig(replications=args.replications, master_seed=seed,
                                              n_jobs=args.jobs))
    out = _output_dir(args)
    write_samples_csv(res, out / "bootstrap_samples.csv")
    write_summary(res, Path(args.summary) if args.summary else out / "bootstrap_summary.txt")
    print(f"beta_c = {res.observed_beta_c * 12e4:.1f}e-4/yr, p = {res.p_value:.4f}"
          f"{' (lower tail)' if res.mirrored else ''}, B = {args.replications}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from .calibration import calibrate
    from .dynamics import save_params

    series = _load(args)
    if args.market is None and args.h_init is None:
        raise ConfigError("calibrate needs --market or --h-init")
    start = _clip_start(series, _start(args))
    rep = calibrate(series, market=args.market, start=start, H_init=args.h_init, window=args.windows,
                    horizon=args.horizon, mode=args.mode,
                    sigma_p_horizons=args.horizons or range(24, 193))
    out = _output_dir(args)
    params = rep.to_params()
    save_params(params, out / "params.txt", units="scaled")
    (out / "calibration.txt").write_text(rep.table())
    print(rep.table(), end="")
    return EXIT_OK


def _params_for(args):
    from .dynamics import load_params, published_params

    if args.params:
        if not Path(args.params).exists():
            raise ConfigError(f"parameter file {args.params} not found")
        return load_params(args.params)
    if args.market:
        return published_params(args.market)
    raise ConfigError("pass --params or --market")


def cmd_simulate(args) -> int:
    from .scenarios import DEFAULT_HORIZONS, InitialConditions, band, simulate

    seed = _require_seed(args)
    params = _params_for(args).validate()
    horizons = args.horizons or list(DEFAULT_HORIZONS)
    if args.input:
        series = _load(args)
        initial = InitialConditions.from_series(series, start=_clip_start(series, _start(args)))
        # one band for the whole cloud, drawn at the average starting point
        ref = (float(np.mean(initial.log_ep0)), float(np.mean(initial.log_dp0)), 0.0)
    else:
        if args.log_ep0 is None:
            raise ConfigError("simulate needs --input or --log-ep0")
        dp0 = args.log_dp0 if args.log_dp0 is not None else float(params.log_G(args.log_ep0))
        initial = InitialConditions([args.log_ep0], [args.mu0], [dp0])
        ref = (args.log_ep0, dp0, args.mu0)
    sc = simulate(params, initial, horizons, args.paths, seed)
    out = _output_dir(args)
    sc.write_csv(out / "scenarios.csv")
    bd = band(params, horizons, ref[0], ref[1], args.z, args.center, ref[2])
    bd.write_csv(out / "band.csv")
    print(f"{sc.n_paths} paths x {len(sc.horizons)} horizons -> {out / 'scenarios.csv'}, {out / 'band.csv'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import format_table, run_suite

    results = run_suite(quick=args.quick, seed=args.seed or 0)
    text = format_table(results)
    print(text, end="")
    if args.output:
        (_output_dir(args) / "validate.txt").write_text(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def cmd_report(args) -> int:
    from .bootstrap import BootstrapConfig, run_bootstrap
    from .calibration import calibrate, predictive_sample
    from .dynamics import save_params

    seed = _require_seed(args)
    if args.market is None:
        raise ConfigError("report needs --market")
    series = _load(args)
    start = _clip_start(series, _start(args))
    rep = calibrate(series, market=args.market, start=start, window=args.windows, horizon=args.horizon,
                    mode=args.mode, sigma_p_horizons=args.horizons or range(24, 193))
    lines = [f"market = {args.market}", f"sample = {series.dates[0]}..{series.dates[-1]}", ""]
    lines.append("Table 1 analogue: augmented regressions of one-year yields on log EP (yearly, 1e-4)")
    lines.append("series       alpha      beta   se(beta)      t   p(bootstrap)")
    _, x, ys = predictive_sample(series, args.horizon, "nonoverlapping", start)
    fits = (rep.predictive.gross, rep.predictive.price, rep.predictive.dividend)
    for i, (name, fit) in enumerate(zip(("gross", "price", "dividend"), fits)):
        if args.mode == "nonoverlapping":
            res = run_bootstrap(ys[i], x, BootstrapConfig(replications=args.replications,
                                                          master_seed=seed + i, n_jobs=args.jobs))
            pv = f"{res.p_value:.4f}"
        else:
            pv = "n/a"
        lines.append(f"{name:<10} {fit.alpha_c * 12e4:9.1f} {fit.beta_c * 12e4:9.1f} "
                     f"{fit.beta_c_standard_error * 12e4:9.1f} {fit.t_statistic:6.2f}   {pv}")
    lines.append("")
    lines.append("Table 2 analogue: monthly parameters (1e-4 except gamma)")
    lines.append(rep.table(predictive=False))
    text = "\n".join(lines)
    out = _output_dir(args)
    (out / "report.txt").write_text(text)
    save_params(rep.to_params(), out / "params.txt", units="scaled")
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "derive": cmd_derive,
    "regress": cmd_regress,
    "bootstrap": cmd_bootstrap,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="monthly market CSV (Date, P, D, E, CPI)")
    common.add_argument("--output", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="master seed; required by stochastic commands")
    common.add_argument("--columns", help="column map file: 'key = column name' lines")
    common.add_argument("--base-month", type=_date, help="CPI base month (default: last month)")
    common.add_argument("--log-ep-source", help="CSV of date,logEP values that replace the computed log EP")
    common.add_argument("--market", choices=("sp", "nyse"), help="market preset (start date, H_init, published params)")
    common.add_argument("--start", type=_date, help="first month of the estimation sample")
    common.add_argument("--mode", choices=("overlapping", "nonoverlapping"), default="nonoverlapping",
                        help="sampling of the one-year predictive regressions")
    common.add_argument("--horizon", type=int, default=12, help="predictive regression horizon in months")
    common.add_argument("--horizons", type=parse_horizons, help="horizon grid, e.g. 24:192 or 24,48,96")
    common.add_argument("--windows", type=int, default=192, help="rolling window length in months")
    common.add_argument("--replications", type=int, default=10_000, help="bootstrap replications")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for the bootstrap")
    common.add_argument("--quick", action="store_true", help="smaller sample sizes for validate")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cape-returns", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse and normalize a raw monthly file")
    sub.add_parser("derive", parents=[common], help="write real prices, CAPE, log EP, log DP and H")
    sub.add_parser("regress", parents=[common], help="augmented predictive regressions")
    b = sub.add_parser("bootstrap", parents=[common], help="bootstrap p-value of the predictive slope")
    b.add_argument("--series", choices=("gross", "price", "dividend"), default="gross")
    b.add_argument("--summary", help="p-value record path (default: OUTPUT/bootstrap_summary.txt)")
    c = sub.add_parser("calibrate", parents=[common], help="estimate the model parameters")
    c.add_argument("--h-init", type=float, nargs=2, metavar=("ALPHA_H", "BETA_H"))
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo scenarios and the analytical band")
    s.add_argument("--params", help="parameter file (from calibrate); default: published values of --market")
    s.add_argument("--paths", type=int, default=1, help="paths per initial condition")
    s.add_argument("--log-ep0", type=float)
    s.add_argument("--log-dp0", type=float)
    s.add_argument("--mu0", type=float, default=0.0)
    s.add_argument("--z", type=float, default=1.96)
    s.add_argument("--center", choices=("exact", "leading", "asymptotic"), default="exact")
    sub.add_parser("validate", parents=[common], help="run the property suite")
    sub.add_parser("report", parents=[common], help="tables of regressions and parameters")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.replications < 1:
        print("error: --replications must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
