"""Command line: ``bayesjoinpoint {fit,baseline,simulate,study}``.

Exit codes: 0 success, 2 malformed input, 3 invalid configuration or
scenario, 4 numerical failure. Outputs depend only on input contents, flags
and seed; the provenance line records the input's SHA-256 rather than its
path so that runs in different directories give identical bytes.
"""
import argparse
import hashlib
import logging
import sys
from pathlib import Path

from . import __version__
from . import io
from .baseline import select_bic
from .exceptions import (
    DegeneratePriorError,
    EmptyGridError,
    InvalidConfigError,
    InvalidScenarioError,
    JoinpointError,
    MalformedInputError,
    MissingForecastPopulationError,
)
from .model import FitConfig
from .sampler import SamplerConfig, run_chains
from .simstudy import (
    StudySettings,
    default_scenarios,
    generate_series,
    load_scenarios,
    replicate_seeds,
    run_study,
)
from .summaries import summarize

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

logger = logging.getLogger("bayesjoinpoint")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _flags(args, skip=("command", "input", "out_dir", "func", "verbose", "timings")):
    return {k.replace("_", "-"): v for k, v in sorted(vars(args).items()) if k not in skip}


def _load(path):
    try:
        return io.read_series_csv(path)
    except OSError as exc:
        raise MalformedInputError(f"cannot read {path}: {exc.strerror}") from exc


def cmd_fit(args):
    data, forecast_pops = _load(args.input)
    fit_cfg = FitConfig(args.jstar, args.gap, args.prior).validate(data.grid)
    smp_cfg = SamplerConfig(
        n_chains=args.chains, n_iter=args.iters, burn_in=args.burnin, thin=args.thin,
        seed=args.seed, adapt_window=min(5_000, args.burnin), prior_only=args.prior_only,
        n_jobs=args.jobs,
    ).validate()
    if args.forecast_years < 0:
        raise InvalidConfigError("--forecast-years must be >= 0")
    flags = _flags(args)
    flags["input-sha256"] = _sha256(args.input)
    header = io.provenance("fit", args.seed, flags)

    draws = run_chains(data, fit_cfg, smp_cfg)
    report = summarize(draws, args.forecast_years, forecast_pops or "last")
    out = io.ensure_dir(args.out_dir)
    io.write_draws(draws, out, header)
    io.write_report(report, out, header)
    if args.plots:
        io.write_svg_plots(report, out, header)
    pmf = " ".join(f"{p:.3f}" for p in report.pmf)
    print(f"P(J = 0..{fit_cfg.jstar}): {pmf}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_baseline(args):
    data, _ = _load(args.input)
    if args.jmax < 0:
        raise InvalidConfigError("--jmax must be >= 0")
    if not args.grid_step > 0 or not args.gap > 0:
        raise InvalidConfigError("--grid-step and --gap must be positive")
    flags = _flags(args)
    flags["input-sha256"] = _sha256(args.input)
    header = io.provenance("baseline", None, flags)
    sel = select_bic(data, args.jmax, args.gap, args.grid_step)
    out = io.ensure_dir(args.out_dir)
    io.write_bic_table(out / "bic.csv", sel, header)
    print(f"BIC selects J = {sel.J}; locations {sel.fit.taus.tolist()}")
    return EXIT_OK


def _scenarios(args):
    return load_scenarios(args.config) if args.config else default_scenarios()


def cmd_simulate(args):
    scenarios = _scenarios(args)
    if args.replicates < 1:
        raise InvalidConfigError("--replicates must be >= 1")
    flags = _flags(args)
    if args.config:
        flags["config-sha256"] = _sha256(args.config)
    flags.pop("config", None)
    out = io.ensure_dir(args.out_dir)
    for s, sc in enumerate(scenarios):
        sc.validate()
        for r in range(args.replicates):
            data_seed, _ = replicate_seeds(args.seed, s, r)
            header = io.provenance("simulate", args.seed, {**flags, "scenario": sc.name,
                                                            "replicate": r})
            io.write_series_csv(out / f"{sc.name}_rep{r:03d}.csv",
                                generate_series(sc, data_seed), header)
    print(f"wrote {len(scenarios) * args.replicates} series to {out}")
    return EXIT_OK


def cmd_study(args):
    scenarios = _scenarios(args)
    if args.replicates < 1:
        raise InvalidConfigError("--replicates must be >= 1")
    settings = StudySettings(jstar=args.jstar, gap=args.gap, n_chains=args.chains,
                             n_iter=args.iters, burn_in=args.burnin, thin=args.thin,
                             jmax=args.jmax, grid_step=args.grid_step)
    SamplerConfig(n_chains=args.chains, n_iter=args.iters, burn_in=args.burnin,
                  thin=args.thin).validate()
    flags = _flags(args)
    if args.config:
        flags["config-sha256"] = _sha256(args.config)
    flags.pop("config", None)
    header = io.provenance("study", args.seed, flags)
    res = run_study(scenarios, args.replicates, master_seed=args.seed, settings=settings,
                    n_jobs=args.jobs)
    out = io.ensure_dir(args.out_dir)
    rows = res.table()
    io.write_table(out / "study.csv", list(rows[0]), rows, header)
    text = res.summary_text()
    (out / "study_summary.txt").write_text(f"# {header}\n{text}")
    if args.timings:
        # wall-clock times vary between runs, so they live apart from study.csv
        t = res.timings()
        io.write_table(out / "study_timings.csv", list(t[0]), t, header)
    print(text, end="")
    return EXIT_OK


def _add_fit_args(p):
    p.add_argument("--jstar", type=int, default=5, help="maximum number of joinpoints")
    p.add_argument("--gap", type=float, default=2.0, help="minimum joinpoint spacing")
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iters", type=int, default=50_000)
    p.add_argument("--burnin", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bayesjoinpoint",
        description="Bayesian joinpoint regression for Poisson count series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="sample the posterior and write the report")
    p.add_argument("input", help="CSV with year,deaths,population[,forecast_population]")
    _add_fit_args(p)
    p.add_argument("--prior", default="bayes1", help="bayes1 or bayes2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--forecast-years", type=int, default=0)
    p.add_argument("--out-dir", default="joinpoint_out")
    p.add_argument("--prior-only", action="store_true", help="switch the likelihood off")
    p.add_argument("--plots", action="store_true", help="also write SVG plots")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("baseline", help="profile-likelihood fits scored by BIC")
    p.add_argument("input")
    p.add_argument("--jmax", type=int, default=3)
    p.add_argument("--gap", type=float, default=2.0)
    p.add_argument("--grid-step", type=float, default=0.25)
    p.add_argument("--out-dir", default="joinpoint_out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("simulate", help="write simulated series for each scenario")
    p.add_argument("--config", help="scenario file (INI sections); default scenarios if omitted")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="joinpoint_sim")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="compare bayes1, bayes2 and BIC on simulated series")
    p.add_argument("--config")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_fit_args(p)
    p.set_defaults(iters=20_000, burnin=5_000)
    p.add_argument("--jmax", type=int, default=3)
    p.add_argument("--grid-step", type=float, default=0.25)
    p.add_argument("--out-dir", default="joinpoint_study")
    p.add_argument("--timings", action="store_true",
                   help="also write per-fit wall-clock times (not reproducible)")
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MalformedInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidConfigError, InvalidScenarioError, DegeneratePriorError,
            EmptyGridError, MissingForecastPopulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except JoinpointError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
