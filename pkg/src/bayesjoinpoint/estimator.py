"""scikit-learn style estimators.

``X`` holds the observation times (one column, or a 1-d array) and ``y``
the counts; person-years go in the ``population`` argument, because they
are an offset rather than a feature.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .baseline import select_bic
from .basis import design_columns
from .model import FitConfig, SeriesData
from .sampler import SamplerConfig, run_chains
from .summaries import log_rate_draws, summarize


def _times(X):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"X must have a single time column, got {X.shape[1]}")
        X = X[:, 0]
    return X


def _series(X, y, population):
    t = _times(X)
    y = check_array(y, ensure_2d=False, dtype=float)
    pop = check_array(population, ensure_2d=False, dtype=float)
    check_consistent_length(t, y, pop)
    order = np.argsort(t, kind="stable")
    return SeriesData.from_arrays(t[order], y[order], pop[order])


class BayesianJoinpointRegressor(BaseEstimator):
    """Poisson joinpoint regression with an unknown number of change-points.

    Parameters
    ----------
    jstar : int
        Maximum number of joinpoints.
    gap : float
        Minimum distance between joinpoints and from the ends of the window.
    prior : {"bayes1", "bayes2"}
        Prior over the indicators: uniform over the joinpoint count, or
        expected count one whatever ``jstar``.
    n_chains, n_iter, burn_in, thin : int
        MCMC settings.
    random_state : int
        Master seed; chain ``c`` uses ``SeedSequence(random_state, spawn_key=(c,))``.
    prior_only : bool
        Switch the likelihood off (prior recovery).
    n_jobs : int
        Worker processes for the chains.

    Attributes
    ----------
    data_ : SeriesData
    draws_ : PosteriorDraws
    report_ : FitReport
        Summaries on the observed grid.
    pmf_ : ndarray
        Posterior probability of 0..jstar joinpoints.
    n_features_in_ : int
    """

    def __init__(self, jstar=5, gap=2.0, prior="bayes1", n_chains=4, n_iter=50_000,
                 burn_in=10_000, thin=10, random_state=0, prior_only=False, n_jobs=1):
        self.jstar = jstar
        self.gap = gap
        self.prior = prior
        self.n_chains = n_chains
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state
        self.prior_only = prior_only
        self.n_jobs = n_jobs

    def fit(self, X, y, population):
        self.data_ = _series(X, y, population)
        fit_cfg = FitConfig(int(self.jstar), float(self.gap), self.prior)
        smp_cfg = SamplerConfig(
            n_chains=int(self.n_chains), n_iter=int(self.n_iter), burn_in=int(self.burn_in),
            thin=int(self.thin), seed=int(self.random_state), prior_only=bool(self.prior_only),
            n_jobs=int(self.n_jobs),
        )
        self.draws_ = run_chains(self.data_, fit_cfg, smp_cfg)
        self.report_ = summarize(self.draws_)
        self.pmf_ = self.report_.pmf
        self.n_features_in_ = 1
        return self

    def predict_rate(self, X):
        """Model-averaged posterior mean rate per person-year at times `X`."""
        check_is_fitted(self, "draws_")
        t = _times(X)
        return np.exp(log_rate_draws(self.draws_, t)).mean(axis=0)

    def predict(self, X, population):
        """Posterior mean expected counts at times `X`."""
        pop = check_array(population, ensure_2d=False, dtype=float)
        rate = self.predict_rate(X)
        check_consistent_length(rate, pop)
        return rate * pop


class JoinpointBIC(BaseEstimator):
    """Maximum-likelihood joinpoint fit with the number of joinpoints picked by BIC.

    Attributes
    ----------
    selection_ : BICSelection
    n_joinpoints_ : int
    joinpoints_ : ndarray
    coef_ : ndarray
        Intercept, slope on centred time, then one coefficient per joinpoint.
    """

    def __init__(self, jmax=3, gap=2.0, grid_step=0.25):
        self.jmax = jmax
        self.gap = gap
        self.grid_step = grid_step

    def fit(self, X, y, population):
        self.data_ = _series(X, y, population)
        self.selection_ = select_bic(self.data_, int(self.jmax), float(self.gap),
                                     float(self.grid_step))
        best = self.selection_.fit
        self.n_joinpoints_ = best.J
        self.joinpoints_ = best.taus
        self.coef_ = best.coef
        self.n_features_in_ = 1
        return self

    def predict_rate(self, X):
        check_is_fitted(self, "coef_")
        t = _times(X)
        X0 = np.column_stack([np.ones(t.size), t - self.data_.grid.mean])
        if self.n_joinpoints_:
            X0 = np.column_stack([X0, design_columns(self.data_.grid, self.joinpoints_, at=t)])
        return np.exp(X0 @ self.coef_)

    def predict(self, X, population):
        pop = check_array(population, ensure_2d=False, dtype=float)
        rate = self.predict_rate(X)
        check_consistent_length(rate, pop)
        return rate * pop
