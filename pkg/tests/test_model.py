import math

import numpy as np
import pytest
from scipy import stats

from bayesjoinpoint import _kernels as K
from bayesjoinpoint.basis import design_columns
from bayesjoinpoint.exceptions import (
    DegeneratePriorError,
    InvalidConfigError,
    NonFiniteError,
    NonPositiveError,
    OutsideOmegaError,
)
from bayesjoinpoint.model import (
    FitConfig,
    ModelState,
    SeriesData,
    fisher_scale_matrix,
    fisher_weights,
    in_omega,
    log_likelihood,
    log_mean,
    log_posterior_unnorm,
    log_prior_beta,
    log_prior_gamma,
    log_prior_model,
)
from bayesjoinpoint.sampler import _Arrays


def _state(J=3, delta=None):
    rng = np.random.default_rng(J)
    delta = np.ones(J, dtype=int) if delta is None else np.asarray(delta)
    return ModelState(-8.4, 0.01, rng.normal(scale=0.1, size=J),
                      1980 + 7.0 * np.arange(1, J + 1), delta, 0.7)


class TestSeriesData:
    def test_rejects_bad_inputs(self):
        t = np.arange(5.0)
        with pytest.raises(ValueError):
            SeriesData.from_arrays(t, [1, 2, -1, 3, 4], np.ones(5))
        with pytest.raises(ValueError):
            SeriesData.from_arrays(t, [1, 2, 1.5, 3, 4], np.ones(5))
        with pytest.raises(ValueError):
            SeriesData.from_arrays(t, [1, 2, 1, 3, 4], [1, 1, 0, 1, 1])
        with pytest.raises(ValueError):
            SeriesData.from_arrays(t, [1, 2, 3], np.ones(5))

    def test_read_only_and_derived(self, small_series):
        with pytest.raises(ValueError):
            small_series.counts[0] = 1
        assert small_series.centered_times.sum() == pytest.approx(0.0)
        np.testing.assert_allclose(small_series.log_factorial,
                                   [math.lgamma(y + 1) for y in small_series.counts])


class TestConfig:
    def test_validation(self, break_series):
        grid = break_series.grid
        FitConfig(5, 2.0, "bayes1").validate(grid)
        with pytest.raises(InvalidConfigError):
            FitConfig(1, 2.0, "bayes2").validate(grid)
        with pytest.raises(InvalidConfigError):
            FitConfig(13, 2.0, "bayes1").validate(grid)  # 1980 + 14 * 2 >= 2007
        with pytest.raises(InvalidConfigError):
            FitConfig(3, 2.0, "bayes3").validate()
        with pytest.raises(InvalidConfigError):
            FitConfig(3, 0.0).validate()
        with pytest.raises(InvalidConfigError):
            FitConfig(0).validate()

    def test_state_validation(self):
        with pytest.raises(ValueError):
            ModelState(0, 0, [0, 0], [1, 2, 3], [0, 0, 0], 1)
        with pytest.raises(ValueError):
            ModelState(0, 0, [0], [1], [2], 1)


def test_omega_is_strict(break_series):
    g = break_series.grid
    assert in_omega([1990.0, 2000.0], g, 2.0)
    assert not in_omega([1982.0, 2000.0], g, 2.0)      # t1 + d == tau1
    assert not in_omega([1990.0, 1992.0], g, 2.0)      # tau1 + d == tau2
    assert not in_omega([1990.0, 2005.0], g, 2.0)      # tau2 + d == tn
    assert not in_omega([2000.0, 1990.0], g, 2.0)


def test_log_likelihood_matches_scipy(break_series):
    s = _state()
    mu = np.exp(log_mean(s, break_series))
    ref = stats.poisson.logpmf(break_series.counts, mu).sum()
    assert log_likelihood(s, break_series) == pytest.approx(ref, rel=1e-12)
    assert log_mean(s, break_series, 3) == pytest.approx(np.log(mu[3]))


def test_inactive_breakpoints_leave_the_mean_alone(break_series):
    s = _state(delta=[0, 0, 0])
    eta = log_mean(s, break_series)
    ref = break_series.log_populations + s.alpha + s.beta0 * break_series.centered_times
    np.testing.assert_allclose(eta, ref)


def test_log_mean_guard(break_series):
    s = _state()
    s.alpha = 800.0
    with pytest.raises(NonFiniteError):
        log_likelihood(s, break_series)


@pytest.mark.parametrize("delta", [(1, 1, 1), (0, 0, 0), (1, 0, 1), (0, 1, 0)])
def test_beta_prior_matches_scipy(break_series, delta):
    s = _state(delta=delta)
    cov = s.gamma * fisher_scale_matrix(s, break_series)
    ref = stats.multivariate_normal(np.zeros(3), cov).logpdf(s.beta)
    assert log_prior_beta(s, break_series) == pytest.approx(ref, rel=1e-10)


def test_scale_matrix_structure(break_series):
    s = _state(delta=[1, 0, 1])
    B = design_columns(break_series.grid, s.tau)
    w = fisher_weights(s, break_series)
    G = B.T @ (w[:, None] * B)
    prec = np.linalg.inv(fisher_scale_matrix(s, break_series)) * break_series.n
    # active pair keeps its cross term, the inactive one is decoupled
    assert prec[0, 2] == pytest.approx(G[0, 2], rel=1e-10)
    assert prec[0, 1] == pytest.approx(0.0, abs=1e-8 * G[1, 1])
    np.testing.assert_allclose(np.diag(prec), np.diag(G), rtol=1e-10)


def test_gamma_prior():
    for g in (0.01, 0.5, 3.0, 400.0):
        assert log_prior_gamma(g) == pytest.approx(stats.invgamma(0.5, scale=0.5).logpdf(g))
    with pytest.raises(NonPositiveError):
        log_prior_gamma(0.0)


def test_model_priors():
    assert log_prior_model([0, 1, 0], 3, "bayes1") == pytest.approx(-math.log(4 * 3))
    assert log_prior_model([0, 0, 0, 0], 4, "bayes2") == pytest.approx(4 * math.log(0.75))
    with pytest.raises(DegeneratePriorError):
        log_prior_model([1], 1, "bayes2")
    with pytest.raises(InvalidConfigError):
        log_prior_model([1], 1, "flat")
    with pytest.raises(ValueError):
        log_prior_model([1, 0], 3, "bayes1")


def test_posterior_is_sum_of_parts(break_series):
    cfg = FitConfig(3, 2.0, "bayes2")
    s = _state(delta=[1, 0, 1])
    want = (log_likelihood(s, break_series) + log_prior_beta(s, break_series)
            + log_prior_gamma(s.gamma) + log_prior_model(s.delta, 3, "bayes2"))
    assert log_posterior_unnorm(s, break_series, cfg) == pytest.approx(want)
    assert log_posterior_unnorm(s, break_series, cfg, likelihood=False) == pytest.approx(
        want - log_likelihood(s, break_series))
    s.tau[1] = s.tau[0] + 1.0
    with pytest.raises(OutsideOmegaError):
        log_posterior_unnorm(s, break_series, cfg)


@pytest.mark.parametrize("prior", ["bayes1", "bayes2"])
@pytest.mark.parametrize("delta", [(1, 1, 1), (0, 0, 0), (0, 1, 1)])
def test_compiled_target_agrees_with_reference(break_series, prior, delta):
    cfg = FitConfig(3, 2.0, prior)
    s = _state(delta=delta)
    a = _Arrays(break_series, cfg, s, True)
    got = K.log_target(a.st, a.beta, a.delta, a.G, a.eta, a.y, a.logfact, a.logpm, True, a.n)
    assert got == pytest.approx(log_posterior_unnorm(s, break_series, cfg), rel=1e-11)
