import numpy as np
import pytest

from bayesjoinpoint.diagnostics import effective_sample_size, mcse_mean, split_rhat


def _ar1(phi, m, n, seed):
    rng = np.random.default_rng(seed)
    x = np.empty((m, n))
    x[:, 0] = rng.normal(size=m) / np.sqrt(1 - phi**2)
    e = rng.normal(size=(m, n))
    for i in range(1, n):
        x[:, i] = phi * x[:, i - 1] + e[:, i]
    return x


def test_rhat_near_one_for_iid():
    x = np.random.default_rng(0).normal(size=(4, 2000))
    assert split_rhat(x) == pytest.approx(1.0, abs=0.01)


def test_rhat_flags_disagreeing_chains():
    x = np.random.default_rng(1).normal(size=(4, 1000))
    x[0] += 3.0
    assert split_rhat(x) > 1.3


def test_rhat_flags_trend_within_chain():
    x = np.random.default_rng(2).normal(size=(1, 2000)) + np.linspace(0, 4, 2000)
    assert split_rhat(x) > 1.2


def test_constant_draws_give_nan():
    assert np.isnan(split_rhat(np.ones((2, 100))))
    assert np.isnan(effective_sample_size(np.ones((2, 100))))


def test_ess_iid_close_to_draw_count():
    x = np.random.default_rng(3).normal(size=(4, 5000))
    assert effective_sample_size(x) == pytest.approx(20_000, rel=0.1)


@pytest.mark.parametrize("phi", [0.5, 0.9])
def test_ess_matches_ar1_theory(phi):
    x = _ar1(phi, 4, 20_000, seed=int(phi * 10))
    want = x.size * (1 - phi) / (1 + phi)
    assert effective_sample_size(x) == pytest.approx(want, rel=0.15)


def test_mcse_shrinks_with_draws_and_accepts_1d():
    x = np.random.default_rng(4).normal(size=40_000)
    assert mcse_mean(x) == pytest.approx(1 / np.sqrt(40_000), rel=0.1)
    assert mcse_mean(x[:4_000]) > mcse_mean(x)
    with pytest.raises(ValueError):
        split_rhat(np.zeros((2, 2, 2)))
