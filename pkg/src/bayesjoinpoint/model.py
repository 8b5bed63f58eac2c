"""Encompassing Poisson joinpoint model: data, state, priors and log-densities.

The mean of the count at time ``t_i`` is

    log mu_i = log P_i + alpha + beta0 * (t_i - tbar)
               + sum_j delta_j * beta_j * B_{tau_j}(t_i)

with ``J*`` candidate break-points switched on and off by the binary vector
``delta``. Conditional on the mixing scale ``gamma`` the break-point
magnitudes get a ``Normal(0, gamma * Sigma)`` prior whose scale matrix is
built from the unit Fisher information of the encompassing model at
``beta = 0``; ``gamma ~ InvGamma(1/2, 1/2)`` makes the marginal a Cauchy.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .basis import TimeGrid, design_columns
from .exceptions import (
    DegeneratePriorError,
    InvalidConfigError,
    NonFiniteError,
    NonPositiveError,
    OutsideOmegaError,
    SingularSystemError,
)

LOG_MEAN_GUARD = 700.0
RCOND_MIN = 1e-12
PRIORS = ("bayes1", "bayes2")


@dataclass(frozen=True, eq=False)
class SeriesData:
    """Observed counts and person-years on a time grid."""

    grid: TimeGrid
    counts: np.ndarray
    populations: np.ndarray
    log_factorial: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        grid = self.grid if isinstance(self.grid, TimeGrid) else TimeGrid(self.grid)
        counts = np.array(self.counts, dtype=float).reshape(-1)
        pops = np.array(self.populations, dtype=float).reshape(-1)
        if counts.size != grid.n or pops.size != grid.n:
            raise ValueError(
                f"lengths differ: {grid.n} times, {counts.size} counts, "
                f"{pops.size} populations"
            )
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise ValueError("counts must be non-negative integers")
        if not np.all(np.isfinite(pops)) or np.any(pops <= 0):
            raise ValueError("populations must be strictly positive")
        counts.setflags(write=False)
        pops.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "log_factorial", gammaln(counts + 1.0))

    @classmethod
    def from_arrays(cls, times, counts, populations):
        return cls(TimeGrid(times), counts, populations)

    @property
    def n(self):
        return self.grid.n

    @property
    def times(self):
        return self.grid.times

    @property
    def centered_times(self):
        return self.grid.times - self.grid.mean

    @property
    def log_populations(self):
        return np.log(self.populations)


@dataclass
class ModelState:
    """One point of the encompassing parameter space."""

    alpha: float
    beta0: float
    beta: np.ndarray
    tau: np.ndarray
    delta: np.ndarray
    gamma: float

    def __post_init__(self):
        self.alpha = float(self.alpha)
        self.beta0 = float(self.beta0)
        self.gamma = float(self.gamma)
        self.beta = np.array(self.beta, dtype=float).reshape(-1)
        self.tau = np.array(self.tau, dtype=float).reshape(-1)
        self.delta = np.array(self.delta, dtype=np.int64).reshape(-1)
        if not (self.beta.size == self.tau.size == self.delta.size):
            raise ValueError("beta, tau and delta must have the same length")
        if np.any((self.delta != 0) & (self.delta != 1)):
            raise ValueError("delta must be binary")

    @property
    def jstar(self):
        return self.tau.size

    def copy(self):
        return ModelState(
            self.alpha, self.beta0, self.beta.copy(), self.tau.copy(),
            self.delta.copy(), self.gamma,
        )


@dataclass(frozen=True)
class FitConfig:
    """Model-level settings: maximum joinpoints, minimum gap, model prior."""

    jstar: int = 5
    gap: float = 2.0
    prior: str = "bayes1"

    def validate(self, grid=None):
        if int(self.jstar) != self.jstar or self.jstar < 1:
            raise InvalidConfigError(f"jstar must be a positive integer, got {self.jstar}")
        if self.prior not in PRIORS:
            raise InvalidConfigError(f"prior must be one of {PRIORS}, got {self.prior!r}")
        if self.prior == "bayes2" and self.jstar < 2:
            raise InvalidConfigError("bayes2 prior needs jstar >= 2")
        if not self.gap > 0:
            raise InvalidConfigError(f"gap must be positive, got {self.gap}")
        if grid is not None and not grid.first + (self.jstar + 1) * self.gap < grid.last:
            raise InvalidConfigError(
                f"no admissible joinpoint locations: {grid.first} + "
                f"({self.jstar}+1)*{self.gap} >= {grid.last}"
            )
        return self


def break_columns(state, data):
    """Break-point design matrix at the state's locations, all J* columns."""
    return design_columns(data.grid, state.tau)


def log_mean(state, data, i=None):
    """Log Poisson mean for observation `i`, or the whole vector if `i` is None."""
    eta = (
        data.log_populations
        + state.alpha
        + state.beta0 * data.centered_times
    )
    active = np.flatnonzero(state.delta)
    if active.size:
        B = design_columns(data.grid, state.tau[active])
        eta = eta + B @ state.beta[active]
    return eta if i is None else float(eta[i])


def log_likelihood(state, data):
    eta = log_mean(state, data)
    if np.any(np.abs(eta) > LOG_MEAN_GUARD):
        raise NonFiniteError("log mean outside the guarded range")
    return float(np.sum(data.counts * eta - np.exp(eta) - data.log_factorial))


def fisher_weights(state, data):
    """Poisson weights ``P_i exp(alpha + beta0 (t_i - tbar))`` of the null fit."""
    return np.exp(data.log_populations + state.alpha + state.beta0 * data.centered_times)


def _masked_information(state, data):
    # Delta G Delta + diag(G - Delta G Delta): G entries kept where both
    # coordinates are active, plus the full diagonal
    B = break_columns(state, data)
    w = fisher_weights(state, data)
    G = B.T @ (w[:, None] * B)
    d = state.delta.astype(bool)
    keep = np.outer(d, d) | np.eye(d.size, dtype=bool)
    return np.where(keep, G, 0.0), G


def _check_conditioning(M):
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(M, 1)
    if not np.isfinite(cond) or 1.0 / cond < RCOND_MIN:
        raise SingularSystemError("break-point information matrix is ill-conditioned")


def fisher_scale_matrix(state, data):
    """Scale matrix ``Sigma = n (Delta G Delta + diag(G - Delta G Delta))^-1``.

    ``G = B^T W B`` is the break-point block of the Fisher information at
    ``beta = 0``. Positive definite for every ``delta`` as long as the
    active columns are linearly independent.
    """
    M, _ = _masked_information(state, data)
    _check_conditioning(M)
    return data.n * np.linalg.inv(M)


def log_prior_beta(state, data):
    """Log ``Normal_J*(beta | 0, gamma * Sigma)``.

    Evaluated through the precision ``M / n`` so nothing is inverted.
    """
    M, _ = _masked_information(state, data)
    _check_conditioning(M)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("scale matrix is not positive definite") from exc
    J = state.jstar
    scale = state.gamma * data.n
    logdet_m = 2.0 * np.sum(np.log(np.diag(L)))
    quad = state.beta @ M @ state.beta
    return float(-0.5 * J * math.log(2 * math.pi * scale) + 0.5 * logdet_m - 0.5 * quad / scale)


def log_prior_gamma(gamma):
    """Inverse-gamma(shape 1/2, scale 1/2) log-density."""
    if not gamma > 0:
        raise NonPositiveError(f"gamma must be positive, got {gamma}")
    return 0.5 * math.log(0.5) - math.lgamma(0.5) - 1.5 * math.log(gamma) - 0.5 / gamma


def _delta_count(delta, jstar):
    delta = np.asarray(delta).reshape(-1)
    if delta.size != jstar:
        raise ValueError(f"delta has length {delta.size}, expected {jstar}")
    if np.any((delta != 0) & (delta != 1)):
        raise ValueError("delta must be binary")
    return int(delta.sum())


def log_prior_model_bayes1(delta, jstar):
    """Equal mass to every joinpoint count, spread evenly within a count."""
    k = _delta_count(delta, jstar)
    return -math.log(jstar + 1) - math.log(math.comb(jstar, k))


def log_prior_model_bayes2(delta, jstar):
    """Independent Bernoulli(1/J*) inclusions: one joinpoint expected for any J*."""
    if jstar < 2:
        raise DegeneratePriorError("bayes2 is degenerate for jstar < 2")
    k = _delta_count(delta, jstar)
    return -jstar * math.log(jstar) + (jstar - k) * math.log(jstar - 1)


def log_prior_model(delta, jstar, prior):
    if prior == "bayes1":
        return log_prior_model_bayes1(delta, jstar)
    if prior == "bayes2":
        return log_prior_model_bayes2(delta, jstar)
    raise InvalidConfigError(f"unknown model prior {prior!r}")


def in_omega(tau, grid, gap):
    """True iff ``t_1 + d < tau_1``, ``tau_j + d < tau_{j+1}`` and ``tau_J + d < t_n``."""
    grid = grid if isinstance(grid, TimeGrid) else TimeGrid(grid)
    chain = np.concatenate(([grid.first], np.asarray(tau, dtype=float).reshape(-1), [grid.last]))
    return bool(np.all(chain[:-1] + gap < chain[1:]))


def log_posterior_unnorm(state, data, config, likelihood=True):
    """Unnormalised log posterior up to the flat-prior constants.

    The flat priors on ``(alpha, beta0)`` and on ``tau`` over Omega add
    constants only and are dropped. ``likelihood=False`` gives the prior.
    """
    if not in_omega(state.tau, data.grid, config.gap):
        raise OutsideOmegaError(f"tau={state.tau} not in Omega")
    lp = (
        log_prior_beta(state, data)
        + log_prior_gamma(state.gamma)
        + log_prior_model(state.delta, config.jstar, config.prior)
    )
    if likelihood:
        lp += log_likelihood(state, data)
    return lp
