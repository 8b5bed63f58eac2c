"""Simulated-data comparison of Bayes1, Bayes2 and BIC joinpoint detection.

Seeds: replicate ``r`` of scenario ``s`` uses
``SeedSequence(master_seed, spawn_key=(s, r))``, whose first two 64-bit
words seed data generation and model fitting respectively.
"""
import configparser
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import select_bic
from .basis import TimeGrid, design_columns
from .exceptions import InvalidScenarioError, JoinpointError
from .model import FitConfig, ModelState, SeriesData, in_omega, log_mean
from .sampler import SamplerConfig, run_chains
from .summaries import joinpoint_count_pmf, location_interval

logger = logging.getLogger(__name__)

METHODS = ("bayes1", "bayes2", "bic")

# declared scale of the reference series: ~285,000 person-years,
# ~62.4 deaths a year over 28 annual observations
REFERENCE_POPULATION = 285_000.0
REFERENCE_COUNT = 62.4
REFERENCE_START = 1980.0
REFERENCE_YEARS = 28


@dataclass(frozen=True)
class Scenario:
    """Truth for one simulation design, in the orthogonal parameterization."""

    name: str
    times: tuple
    populations: tuple
    alpha: float
    beta0: float
    taus: tuple = ()
    betas: tuple = ()
    gap: float = 2.0

    @property
    def n_joinpoints(self):
        return len(self.taus)

    def validate(self):
        if len(self.taus) != len(self.betas):
            raise InvalidScenarioError(f"{self.name}: taus and betas differ in length")
        if len(self.populations) != len(self.times):
            raise InvalidScenarioError(f"{self.name}: populations and times differ in length")
        try:
            grid = TimeGrid(self.times)
        except ValueError as exc:
            raise InvalidScenarioError(f"{self.name}: {exc}") from exc
        if self.taus and not in_omega(self.taus, grid, self.gap):
            raise InvalidScenarioError(f"{self.name}: joinpoints {self.taus} violate Omega")
        if min(self.populations) <= 0:
            raise InvalidScenarioError(f"{self.name}: populations must be positive")
        return self


def scenario_from_slopes(name, slopes, break_years=(), n=REFERENCE_YEARS,
                         start=REFERENCE_START, population=REFERENCE_POPULATION,
                         mean_count=REFERENCE_COUNT, gap=2.0):
    """Build a scenario from segment slopes of the log rate.

    `break_years` are 1-based positions in the series (year 15 of 28 is
    ``start + 14``). The level is set so the geometric-mean expected count
    equals `mean_count`; the continuous piecewise-linear log rate is then
    expressed exactly as intercept, centred slope and break-point
    magnitudes.
    """
    slopes = tuple(float(s) for s in slopes)
    if len(slopes) != len(break_years) + 1:
        raise InvalidScenarioError(f"{name}: need one more slope than breaks")
    times = start + np.arange(n, dtype=float)
    taus = tuple(float(start + b - 1) for b in break_years)
    # continuous piecewise-linear log rate with kinks at taus
    f = slopes[0] * (times - times[0])
    for tau, ds in zip(taus, np.diff(slopes)):
        f = f + ds * np.maximum(times - tau, 0.0)
    f = f - f.mean()
    X = np.column_stack([np.ones(n), times - times.mean()])
    if taus:
        X = np.hstack([X, design_columns(TimeGrid(times), taus)])
    coef = np.linalg.lstsq(X, f, rcond=None)[0]
    pops = np.broadcast_to(np.asarray(population, dtype=float), (n,))
    alpha = float(np.log(mean_count / pops.mean()))
    return Scenario(
        name=name, times=tuple(times.tolist()), populations=tuple(pops.tolist()),
        alpha=alpha, beta0=float(coef[1]), taus=taus,
        betas=tuple(float(b) for b in coef[2:]), gap=gap,
    ).validate()


def default_scenarios():
    """Null, one break at year 15 (+0.02 to -0.04), two breaks at years 10 and 20."""
    return [
        scenario_from_slopes("null", [0.0]),
        scenario_from_slopes("single", [0.02, -0.04], [15]),
        scenario_from_slopes("double", [0.03, -0.04, 0.03], [10, 20]),
    ]


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def load_scenarios(path):
    """Read scenarios from an INI-style key-value file, one section each.

    Either slope form (``slopes``, optional ``breaks`` as 1-based years,
    ``mean_count``) or direct form (``alpha``, ``beta0``, ``taus``,
    ``betas``). Shared keys: ``n``, ``start``, ``population``, ``gap``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise InvalidScenarioError(str(exc)) from exc
    scenarios = []
    for name in parser.sections():
        sec = parser[name]
        try:
            n = sec.getint("n", REFERENCE_YEARS)
            start = sec.getfloat("start", REFERENCE_START)
            gap = sec.getfloat("gap", 2.0)
            pop = _floats(sec.get("population", str(REFERENCE_POPULATION)))
            pop = pop[0] if len(pop) == 1 else pop
            if "slopes" in sec:
                breaks = [int(b) for b in _floats(sec.get("breaks", ""))]
                scenarios.append(scenario_from_slopes(
                    name, _floats(sec["slopes"]), breaks, n=n, start=start,
                    population=pop, mean_count=sec.getfloat("mean_count", REFERENCE_COUNT),
                    gap=gap,
                ))
            else:
                times = start + np.arange(n, dtype=float)
                pops = np.broadcast_to(np.asarray(pop, dtype=float), (n,))
                scenarios.append(Scenario(
                    name=name, times=tuple(times.tolist()), populations=tuple(pops.tolist()),
                    alpha=sec.getfloat("alpha"), beta0=sec.getfloat("beta0", 0.0),
                    taus=tuple(_floats(sec.get("taus", ""))),
                    betas=tuple(_floats(sec.get("betas", ""))), gap=gap,
                ).validate())
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidScenarioError):
                raise
            raise InvalidScenarioError(f"{name}: {exc}") from exc
    if not scenarios:
        raise InvalidScenarioError(f"no scenarios in {path}")
    return scenarios


def expected_counts(scenario):
    scenario.validate()
    J = scenario.n_joinpoints
    state = ModelState(scenario.alpha, scenario.beta0, scenario.betas, scenario.taus,
                       np.ones(J, dtype=int), 1.0)
    data = SeriesData.from_arrays(scenario.times, np.zeros(len(scenario.times)),
                                  scenario.populations)
    return np.exp(log_mean(state, data))


def generate_series(scenario, seed):
    """Poisson counts around the scenario's mean; deterministic in `seed`."""
    mu = expected_counts(scenario)
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    return SeriesData.from_arrays(scenario.times, rng.poisson(mu), scenario.populations)


def replicate_seeds(master_seed, scenario_index, replicate):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(scenario_index, replicate))
    data_seed, fit_seed = ss.generate_state(2, dtype=np.uint64)
    return int(data_seed), int(fit_seed)


@dataclass(frozen=True)
class StudySettings:
    jstar: int = 5
    gap: float = 2.0
    n_chains: int = 4
    n_iter: int = 20_000
    burn_in: int = 5_000
    thin: int = 10
    jmax: int = 3
    grid_step: float = 0.25


@dataclass
class StudyResult:
    scenarios: list
    methods: tuple
    replicates: int
    max_joinpoints: int
    records: list = field(default_factory=list)

    def table(self):
        """One row per scenario x method (deterministic; no timings)."""
        rows = []
        width = self.max_joinpoints
        for sc in self.scenarios:
            for m in self.methods:
                recs = [r for r in self.records if r["scenario"] == sc.name and r["method"] == m]
                good = [r for r in recs if r["error"] is None]
                sel = np.array([r["selected"] for r in good], dtype=int)
                freq = np.bincount(sel, minlength=width + 1)[: width + 1] / max(len(good), 1)
                cov = [r["covered"] for r in good if r["covered"] is not None]
                rows.append({
                    "scenario": sc.name,
                    "method": m,
                    "true_joinpoints": sc.n_joinpoints,
                    "replicates": len(recs),
                    "failures": len(recs) - len(good),
                    **{f"p_select_{j}": float(freq[j]) for j in range(width + 1)},
                    "p_correct": float(np.mean(sel == sc.n_joinpoints)) if len(good) else float("nan"),
                    "coverage": float(np.mean(cov)) if cov else float("nan"),
                })
        return rows

    def timings(self):
        rows = []
        for sc in self.scenarios:
            for m in self.methods:
                secs = [r["seconds"] for r in self.records
                        if r["scenario"] == sc.name and r["method"] == m]
                rows.append({"scenario": sc.name, "method": m,
                             "mean_seconds": float(np.mean(secs)) if secs else float("nan")})
        return rows

    def summary_text(self):
        lines = [f"replicates per scenario: {self.replicates}"]
        for row in self.table():
            sel = {k[len("p_select_"):]: v for k, v in row.items() if k.startswith("p_select_")}
            freq = " ".join(f"J={j}:{v:.2f}" for j, v in sel.items())
            cov = "n/a" if np.isnan(row["coverage"]) else f"{row['coverage']:.2f}"
            lines.append(
                f"{row['scenario']:>10s} {row['method']:>7s} true J={row['true_joinpoints']} "
                f"correct={row['p_correct']:.2f} coverage={cov} "
                f"failures={row['failures']}  [{freq}]"
            )
        return "\n".join(lines) + "\n"


def _covers(intervals, truth):
    if intervals is None or len(truth) == 0:
        return None if len(truth) == 0 else False
    return bool(all(lo <= t <= hi for (lo, hi), t in zip(intervals, truth)))


def _fit_replicate(args):
    s_idx, scenario, rep, methods, settings, master_seed = args
    data_seed, fit_seed = replicate_seeds(master_seed, s_idx, rep)
    data = generate_series(scenario, data_seed)
    truth = scenario.taus
    out = []
    for method in methods:
        rec = {"scenario": scenario.name, "method": method, "replicate": rep,
               "selected": None, "covered": None, "error": None, "seconds": 0.0}
        t0 = time.perf_counter()
        try:
            if method == "bic":
                sel = select_bic(data, settings.jmax, settings.gap, settings.grid_step)
                rec["selected"] = sel.J
                if truth:
                    fits = {f.J: f for f in sel.fits}
                    f = fits.get(len(truth))
                    rec["covered"] = _covers(None if f is None else f.location_intervals(), truth)
            else:
                draws = run_chains(
                    data,
                    FitConfig(settings.jstar, settings.gap, method),
                    SamplerConfig(n_chains=settings.n_chains, n_iter=settings.n_iter,
                                  burn_in=settings.burn_in, thin=settings.thin,
                                  seed=fit_seed, adapt_window=min(5_000, settings.burn_in)),
                )
                pmf = joinpoint_count_pmf(draws)
                rec["selected"] = int(np.argmax(pmf))
                rec["pmf"] = pmf.tolist()
                if truth:
                    rec["covered"] = _covers(location_interval(draws, len(truth)), truth)
        except JoinpointError as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
            logger.warning("%s/%s replicate %d failed: %s", scenario.name, method, rep, exc)
        rec["seconds"] = time.perf_counter() - t0
        out.append(rec)
    return (s_idx, rep), out


def run_study(scenarios=None, replicates=10, methods=METHODS, master_seed=0,
              settings=None, n_jobs=1):
    """Fit every method to every replicate of every scenario.

    Per-replicate failures are recorded, not raised. Records are merged in
    (scenario, replicate) order whatever the pool schedule.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    scenarios = list(scenarios or default_scenarios())
    for sc in scenarios:
        sc.validate()
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    settings = settings or StudySettings()
    jobs = [(s, sc, r, methods, settings, master_seed)
            for s, sc in enumerate(scenarios) for r in range(replicates)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_fit_replicate, jobs))
    else:
        results = [_fit_replicate(job) for job in jobs]
    results.sort(key=lambda kv: kv[0])
    width = max(settings.jstar if any(m != "bic" for m in methods) else 0,
                settings.jmax if "bic" in methods else 0)
    return StudyResult(scenarios, methods, replicates, width,
                       [rec for _, recs in results for rec in recs])
