"""Convergence diagnostics for multi-chain draws.

Split R-hat and the multi-chain effective sample size follow Gelman et al.,
Bayesian Data Analysis (3rd ed.), with Geyer's initial monotone sequence
truncation of the autocorrelation sum.
"""
import numpy as np


def _as_chains(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (chains, draws)")
    return x


def _split(x):
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def split_rhat(x):
    """Potential scale reduction on chains split in half.

    Returns NaN when the draws have no within-chain variance.
    """
    x = _split(_as_chains(x))
    m, n = x.shape
    if n < 2:
        return np.nan
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    if W <= 0:
        return np.nan
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocovariance(x):
    # FFT autocovariance of each row, biased (divides by n)
    n = x.shape[1]
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    centred = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(centred, n=size, axis=1)
    acov = np.fft.irfft(f * np.conjugate(f), n=size, axis=1)[:, :n]
    return acov / n


def effective_sample_size(x):
    """Multi-chain effective sample size of a scalar quantity."""
    x = _split(_as_chains(x))
    m, n = x.shape
    if n < 4:
        return np.nan
    acov = _autocovariance(x)
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = (n - 1) / n * W
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return np.nan
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # Geyer: sum adjacent pairs while positive, enforce monotone decrease
    total = 0.0
    prev_pair = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        total += pair
        prev_pair = pair
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def mcse_mean(x):
    """Monte Carlo standard error of the posterior mean."""
    x = _as_chains(x)
    ess = effective_sample_size(x)
    if not np.isfinite(ess):
        return np.nan
    return float(x.std(ddof=1) / np.sqrt(ess))
