import math
from itertools import product

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from bayesjoinpoint.diagnostics import mcse_mean, split_rhat
from bayesjoinpoint.exceptions import InvalidConfigError
from bayesjoinpoint.model import (
    FitConfig,
    ModelState,
    fisher_scale_matrix,
    log_posterior_unnorm,
)
from bayesjoinpoint.sampler import (
    SamplerConfig,
    initial_state,
    run_chains,
    update_alpha_beta0_beta,
    update_delta,
    update_gamma,
    update_tau,
)

SHORT = dict(n_chains=2, n_iter=3000, burn_in=1000, thin=5)


def test_config_validation():
    SamplerConfig().validate()
    for bad in (dict(n_chains=0), dict(burn_in=10, n_iter=10), dict(thin=0),
                dict(adapt_window=-1), dict(seed=-1)):
        with pytest.raises(InvalidConfigError):
            SamplerConfig(**bad).validate()
    assert SamplerConfig(n_iter=100, burn_in=50, adapt_window=5000).adapt_until == 50
    assert SamplerConfig(n_iter=101, burn_in=50, thin=10).n_kept == 6


def test_initial_state_is_null_start(break_series):
    s = initial_state(break_series, FitConfig(3))
    assert s.alpha == pytest.approx(math.log(break_series.counts.sum()
                                             / break_series.populations.sum()))
    assert s.beta0 == 0 and s.gamma == 1 and not s.delta.any() and not s.beta.any()
    np.testing.assert_allclose(np.diff(s.tau), np.diff(s.tau)[0])


def test_shapes_and_bookkeeping(break_series):
    d = run_chains(break_series, FitConfig(3), SamplerConfig(**SHORT, seed=1))
    assert d.alpha.shape == (2, 400) and d.tau.shape == (2, 400, 3)
    assert d.iterations[0] == 1000 and np.all(np.diff(d.iterations) == 5)
    assert d.merged("beta").shape == (800, 3)
    assert set(d.acceptance_rates()) == {"tau_rw", "tau_interval", "alpha_beta0", "beta_rw"}
    s = d.state(1, 7)
    assert isinstance(s, ModelState) and s.jstar == 3
    grid = break_series.grid
    ok = [np.all(np.r_[grid.first, t, grid.last][:-1] + 2 < np.r_[grid.first, t, grid.last][1:])
          for t in d.merged("tau")]
    assert all(ok)


def test_same_seed_same_draws_and_pool_invariance(break_series):
    cfg = FitConfig(2)
    a = run_chains(break_series, cfg, SamplerConfig(**SHORT, seed=7))
    b = run_chains(break_series, cfg, SamplerConfig(**SHORT, seed=7, n_jobs=2))
    c = run_chains(break_series, cfg, SamplerConfig(**SHORT, seed=8))
    for name in ("alpha", "beta0", "gamma", "beta", "tau", "delta"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.tau, c.tau)
    # chains use distinct streams
    assert not np.array_equal(a.tau[0], a.tau[1])


def test_prior_only_holds_intercept_and_slope(break_series):
    d = run_chains(break_series, FitConfig(2),
                   SamplerConfig(**SHORT, seed=3, prior_only=True))
    s0 = initial_state(break_series, FitConfig(2))
    assert np.all(d.alpha == s0.alpha) and np.all(d.beta0 == 0.0)


def _rest(data, J=2, delta=(1, 0)):
    rng = np.random.default_rng(0)
    return ModelState(math.log(data.counts.sum() / data.populations.sum()), -0.005,
                      rng.normal(scale=0.2, size=J), [1990.0, 1997.5][:J], delta, 0.8)


def test_delta_block_targets_its_full_conditional(break_series):
    cfg = FitConfig(2, 2.0, "bayes1")
    state = _rest(break_series)
    logp = {}
    for d in product((0, 1), repeat=2):
        s = state.copy()
        s.delta = np.array(d)
        logp[d] = log_posterior_unnorm(s, break_series, cfg)
    z = np.logaddexp.reduce(list(logp.values()))
    want = {d: math.exp(v - z) for d, v in logp.items()}

    rng = np.random.default_rng(11)
    counts = dict.fromkeys(want, 0)
    n = 6000
    for _ in range(n):
        state = update_delta(state, break_series, cfg, rng)
        counts[tuple(state.delta)] += 1
    for d, p in want.items():
        # two-point Gibbs per coordinate mixes fast; allow 5 binomial SE
        assert counts[d] / n == pytest.approx(p, abs=5 * math.sqrt(p * (1 - p) / n) + 1e-3)


def test_gamma_block_is_exact_conditional(break_series):
    state = _rest(break_series)
    state.delta = np.array([1, 1])
    q = state.beta @ np.linalg.solve(fisher_scale_matrix(state, break_series), state.beta)
    ref = stats.invgamma(1.5, scale=0.5 * (1 + q))
    rng = np.random.default_rng(12)
    draws = [update_gamma(state, break_series, rng).gamma for _ in range(3000)]
    assert stats.kstest(draws, ref.cdf).pvalue > 0.01


def test_tau_block_targets_its_full_conditional(break_series):
    cfg = FitConfig(1, 2.0, "bayes1")
    state = ModelState(-8.4, 0.0, [-0.25], [1990.0], [1], 0.5)
    grid = np.linspace(break_series.grid.first + 2, break_series.grid.last - 2, 4001)[1:-1]
    lp = []
    for t in grid:
        s = state.copy()
        s.tau = np.array([t])
        lp.append(log_posterior_unnorm(s, break_series, cfg))
    dens = np.exp(np.array(lp) - max(lp))
    mean_ref = trapezoid(grid * dens, grid) / trapezoid(dens, grid)

    rng = np.random.default_rng(13)
    out = np.empty(8000)
    for i in range(out.size):
        state = update_tau(state, break_series, cfg, rng, log_scales=[0.5])
        out[i] = state.tau[0]
    out = out[500:]
    se = mcse_mean(out.reshape(4, -1))
    assert abs(out.mean() - mean_ref) < 4 * se + 0.02


def test_coefficient_blocks_keep_shapes(break_series):
    cfg = FitConfig(2)
    rng = np.random.default_rng(14)
    s = _rest(break_series)
    s2 = update_alpha_beta0_beta(s, break_series, cfg, rng)
    assert s2.beta.shape == (2,) and np.isfinite(s2.alpha)
    # the inactive coefficient is redrawn from its pseudoprior every time
    assert s2.beta[1] != s.beta[1]
    # input state is left untouched
    assert s.alpha == _rest(break_series).alpha


def test_prior_only_bayes2_count_distribution(break_series):
    J = 4
    d = run_chains(break_series, FitConfig(J, 2.0, "bayes2"),
                   SamplerConfig(n_chains=4, n_iter=12_000, burn_in=2_000, thin=4, seed=21,
                                 prior_only=True))
    k = d.n_active.astype(float)
    want = stats.binom(J, 1 / J)
    for c in range(J + 1):
        hit = (k == c).astype(float)
        assert abs(hit.mean() - want.pmf(c)) < 4 * mcse_mean(hit) + 1e-3


def test_prior_only_tau_marginals_are_beta(break_series):
    # uniform on Omega: tau_j = t1 + j d + L U_(j), U_(j) ~ Beta(j, J - j + 1)
    J, gap = 3, 2.0
    d = run_chains(break_series, FitConfig(J, gap),
                   SamplerConfig(n_chains=4, n_iter=22_000, burn_in=2_000, thin=8, seed=22,
                                 prior_only=True))
    g = break_series.grid
    L = g.last - g.first - (J + 1) * gap
    tau = d.merged("tau")
    for j in range(J):
        u = (tau[:, j] - g.first - (j + 1) * gap) / L
        assert stats.kstest(u, stats.beta(j + 1, J - j).cdf).pvalue > 0.001


def test_posterior_on_break_data_converges(break_series):
    d = run_chains(break_series, FitConfig(3),
                   SamplerConfig(n_chains=4, n_iter=12_000, burn_in=3_000, thin=5, seed=23))
    assert split_rhat(d.alpha) < 1.05
    assert split_rhat(d.beta0) < 1.05
    for rates in d.acceptance_rates().values():
        assert all(0.05 < r < 0.95 for r in rates)
    assert np.bincount(d.n_active.ravel(), minlength=4).argmax() >= 1
