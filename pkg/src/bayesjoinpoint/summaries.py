"""Posterior summaries of a joinpoint fit.

Everything here is model-averaged: draws from all joinpoint counts are
pooled, each weighted by how often the sampler visited its model. Intervals
are equal-tailed, with numpy's default (type 7) percentile interpolation.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .basis import breakpoint_slopes, eval_breakpoints
from .exceptions import (
    EmptyDrawsError,
    MissingForecastPopulationError,
    UnknownParameterError,
)

RATE_SCALE = 1e5
MIN_CONDITIONAL_DRAWS = 200
SUMMARY_PARAMETERS = ("alpha", "beta0", "gamma")


def _check_draws(draws):
    if draws.n_chains * draws.n_draws == 0:
        raise EmptyDrawsError("no posterior draws")


def joinpoint_count_pmf(draws):
    """Posterior probability of 0, 1, ..., J* joinpoints."""
    _check_draws(draws)
    k = draws.n_active.ravel()
    counts = np.bincount(k, minlength=draws.jstar + 1)
    return counts / counts.sum()


def forecast_times(grid, horizon_years):
    """Yearly steps after the last observation."""
    return grid.last + np.arange(1, int(horizon_years) + 1, dtype=float)


def _forecast_populations(data, times, rule):
    if times.size == 0:
        return np.empty(0)
    if rule is None:
        raise MissingForecastPopulationError(
            "forecast requested without a population rule"
        )
    last = data.populations[-1]
    if isinstance(rule, str):
        if rule != "last":
            raise ValueError(f"unknown forecast population rule {rule!r}")
        return np.full(times.size, last)
    if isinstance(rule, dict):
        # per-year overrides, last observed value elsewhere
        return np.array([float(rule.get(float(t), rule.get(int(t), last))) for t in times])
    pops = np.asarray(rule, dtype=float).reshape(-1)
    if pops.size != times.size:
        raise ValueError(f"need {times.size} forecast populations, got {pops.size}")
    return pops


def log_rate_draws(draws, times):
    """Per-draw log rate ``alpha + beta0 (t - tbar) + sum delta beta B(t)``.

    Returns an array of shape (chains * draws, len(times)).
    """
    data = draws.data
    times = np.asarray(times, dtype=float)
    alpha = draws.merged("alpha")
    beta0 = draws.merged("beta0")
    tau = draws.merged("tau")
    coef = draws.merged("beta") * draws.merged("delta")
    out = alpha[:, None] + beta0[:, None] * (times - data.grid.mean)
    if draws.jstar:
        b0, b1 = breakpoint_slopes(data.grid, tau)
        B = eval_breakpoints(tau, b0, b1, times)  # (D, J, T)
        out += np.einsum("dj,djt->dt", coef, B)
    return out


def averaged_trend(draws, horizon_years=0, forecast_population="last", per=RATE_SCALE):
    """Model-averaged rate per `per` person-years on the grid plus a forecast.

    Parameters
    ----------
    draws : PosteriorDraws
    horizon_years : int
        Number of yearly forecast points after the last observation.
    forecast_population : {"last"}, dict, array_like or None
        Populations for forecast years: hold the last observed value, per-year
        overrides, or an explicit array. Only expected counts depend on it.
    per : float
        Rate denominator.

    Returns
    -------
    dict of arrays
        ``time``, ``forecast`` (bool), ``population``, ``rate_mean``,
        ``rate_lower``, ``rate_upper``, ``count_mean``, ``count_lower``,
        ``count_upper``.
    """
    _check_draws(draws)
    if horizon_years < 0:
        raise ValueError("horizon must be >= 0")
    data = draws.data
    fut = forecast_times(data.grid, horizon_years)
    pops = np.concatenate([data.populations, _forecast_populations(data, fut, forecast_population)])
    times = np.concatenate([data.times, fut])
    with np.errstate(over="ignore"):
        # prior-only draws have Cauchy-like tails, so inf is an honest mean
        rate = np.exp(log_rate_draws(draws, times))
        counts = rate * pops
        rate = rate * per
    rlo, rhi = np.percentile(rate, [2.5, 97.5], axis=0)
    clo, chi = np.percentile(counts, [2.5, 97.5], axis=0)
    return {
        "time": times,
        "forecast": np.r_[np.zeros(data.n, bool), np.ones(fut.size, bool)],
        "population": pops,
        "rate_mean": rate.mean(axis=0),
        "rate_lower": rlo,
        "rate_upper": rhi,
        "count_mean": counts.mean(axis=0),
        "count_lower": clo,
        "count_upper": chi,
    }


def cumulative_change_prob(draws, t):
    """P(some active joinpoint lies at or before `t`); scalar or array `t`."""
    _check_draws(draws)
    tau = draws.merged("tau")
    active = draws.merged("delta").astype(bool)
    # earliest active location per draw; inf when none is active
    first = np.where(active, tau, np.inf).min(axis=1) if draws.jstar else np.full(tau.shape[0], np.inf)
    t_arr = np.asarray(t, dtype=float)
    out = (first[:, None] <= t_arr.reshape(-1)).mean(axis=0)
    return float(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


@dataclass
class ConditionalLocations:
    """Active locations of the draws that have exactly `k` joinpoints."""

    k: int
    samples: np.ndarray
    bin_edges: np.ndarray
    histograms: np.ndarray
    fraction: float

    @property
    def n_samples(self):
        return self.samples.shape[0]


def conditional_location_density(draws, k, bin_width=1.0):
    """Joint sample and per-rank histograms of locations given ``sum(delta) = k``.

    Histogram bins are fixed-width and anchored at the floor of the first
    observation time, so output is reproducible. Fewer than 200 qualifying
    draws only triggers a warning.
    """
    _check_draws(draws)
    if k < 1:
        raise ValueError("k must be >= 1")
    grid = draws.data.grid
    tau = draws.merged("tau")
    delta = draws.merged("delta").astype(bool)
    rows = delta.sum(axis=1) == k
    # Omega keeps locations ordered, so masking preserves rank order
    samples = tau[rows][delta[rows]].reshape(-1, k) if rows.any() else np.empty((0, k))
    if samples.shape[0] < MIN_CONDITIONAL_DRAWS:
        warnings.warn(
            f"only {samples.shape[0]} draws with {k} joinpoints", RuntimeWarning, stacklevel=2
        )
    lo = np.floor(grid.first)
    edges = np.arange(lo, np.ceil(grid.last) + bin_width, bin_width)
    hists = np.array([np.histogram(samples[:, r], bins=edges)[0] for r in range(k)])
    return ConditionalLocations(k, samples, edges, hists, float(rows.mean()))


def parameter_summary(draws, name):
    """Mean, sd, median and central 95% interval of alpha, beta0 or gamma."""
    if name not in SUMMARY_PARAMETERS:
        raise UnknownParameterError(name)
    _check_draws(draws)
    x = draws.merged(name)
    lo, med, hi = np.percentile(x, [2.5, 50, 97.5])
    return {
        "mean": float(x.mean()),
        "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
        "median": float(med),
        "lower": float(lo),
        "upper": float(hi),
    }


def location_interval(draws, k, level=0.95):
    """Equal-tailed interval of each ranked location given k joinpoints."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cond = conditional_location_density(draws, k)
    if cond.n_samples == 0:
        return None
    a = 100 * (1 - level) / 2
    return np.percentile(cond.samples, [a, 100 - a], axis=0).T


def diagnostics_summary(draws):
    out = {}
    for name in SUMMARY_PARAMETERS:
        x = getattr(draws, name)
        out[name] = {
            "rhat": diagnostics.split_rhat(x),
            "ess": diagnostics.effective_sample_size(x),
        }
    k = draws.n_active.astype(float)
    out["n_joinpoints"] = {
        "rhat": diagnostics.split_rhat(k),
        "ess": diagnostics.effective_sample_size(k),
    }
    out["acceptance"] = draws.acceptance_rates()
    return out


@dataclass
class FitReport:
    pmf: np.ndarray
    trend: dict
    parameters: dict
    cumulative: dict
    conditional: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    horizon_years: int = 0

    @property
    def modal_joinpoints(self):
        return int(np.argmax(self.pmf))

    def to_dict(self):
        def clean(x):
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, np.ndarray):
                return clean(x.tolist())
            if isinstance(x, (np.floating, float)):
                x = float(x)
                return x if np.isfinite(x) else None
            if isinstance(x, (np.integer,)):
                return int(x)
            if isinstance(x, np.bool_):
                return bool(x)
            return x

        return clean({
            "joinpoint_pmf": self.pmf,
            "modal_joinpoints": self.modal_joinpoints,
            "parameters": self.parameters,
            "trend": self.trend,
            "horizon_years": self.horizon_years,
            "cumulative_change_probability": self.cumulative,
            "conditional_locations": {
                k: {
                    "n_draws": c.n_samples,
                    "probability": c.fraction,
                    "mean": c.samples.mean(axis=0) if c.n_samples else None,
                }
                for k, c in self.conditional.items()
            },
            "diagnostics": self.diagnostics,
        })


def summarize(draws, horizon_years=0, forecast_population="last", curve_step=0.1):
    """Assemble the full report for a set of draws."""
    _check_draws(draws)
    grid = draws.data.grid
    curve_t = np.round(np.arange(grid.first, grid.last + curve_step / 2, curve_step), 10)
    conditional = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k in range(1, draws.jstar + 1):
            conditional[k] = conditional_location_density(draws, k)
    return FitReport(
        pmf=joinpoint_count_pmf(draws),
        trend=averaged_trend(draws, horizon_years, forecast_population),
        parameters={name: parameter_summary(draws, name) for name in SUMMARY_PARAMETERS},
        cumulative={"time": curve_t, "probability": cumulative_change_prob(draws, curve_t)},
        conditional=conditional,
        diagnostics=diagnostics_summary(draws),
        horizon_years=int(horizon_years),
    )
