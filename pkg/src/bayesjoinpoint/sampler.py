"""Metropolis-within-Gibbs sampler for the encompassing joinpoint model.

The parameter dimension is fixed at ``J* + 4`` (alpha, beta0, gamma and
``J*`` triples of beta, tau, delta), so model selection reduces to sampling
the indicators ``delta``. Inactive coordinates keep moving under their
pseudoprior so a flip always lands somewhere plausible.

Random numbers come from one ``numpy.random.Generator`` per chain, seeded
from ``SeedSequence(seed, spawn_key=(chain,))`` and drawn in fixed-size
blocks; the compiled sweeps consume them in a fixed order, so a run is a
pure function of data, configuration and seed.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .exceptions import InvalidConfigError, SingularSystemError
from .model import FitConfig, ModelState, SeriesData, log_prior_model

logger = logging.getLogger(__name__)

BLOCK = 2000
BLOCK_NAMES = ("tau_rw", "tau_interval", "alpha_beta0", "beta_rw")


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_iter: int = 50_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int = 0
    adapt_window: int = 5_000
    target_accept: tuple = (0.20, 0.40)
    prior_only: bool = False
    n_jobs: int = 1

    def validate(self):
        if self.n_chains < 1:
            raise InvalidConfigError("n_chains must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise InvalidConfigError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise InvalidConfigError("thin must be >= 1")
        if self.adapt_window < 0:
            raise InvalidConfigError("adapt_window must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfigError("seed must be a 64-bit unsigned integer")
        return self

    @property
    def adapt_until(self):
        # adaptation never runs past burn-in
        return min(self.adapt_window, self.burn_in)

    @property
    def n_kept(self):
        return (self.n_iter - self.burn_in + self.thin - 1) // self.thin


@dataclass
class PosteriorDraws:
    """Thinned post burn-in draws, indexed ``[chain, draw(, coordinate)]``."""

    alpha: np.ndarray
    beta0: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    tau: np.ndarray
    delta: np.ndarray
    iterations: np.ndarray
    acceptance: np.ndarray
    proposal_scales: list = field(default_factory=list)
    data: SeriesData = None
    fit_config: FitConfig = None
    sampler_config: SamplerConfig = None

    @property
    def n_chains(self):
        return self.alpha.shape[0]

    @property
    def n_draws(self):
        return self.alpha.shape[1]

    @property
    def jstar(self):
        return self.tau.shape[2]

    @property
    def n_active(self):
        return self.delta.sum(axis=2)

    def merged(self, name):
        """Chains concatenated along the draw axis."""
        x = getattr(self, name)
        return x.reshape((-1,) + x.shape[2:])

    def state(self, chain, draw):
        return ModelState(
            self.alpha[chain, draw], self.beta0[chain, draw],
            self.beta[chain, draw], self.tau[chain, draw],
            self.delta[chain, draw], self.gamma[chain, draw],
        )

    def acceptance_rates(self):
        """Post burn-in acceptance per chain and Metropolis block."""
        return {
            name: self.acceptance[:, b].tolist() for b, name in enumerate(BLOCK_NAMES)
        }


class _Arrays:
    """Kernel-side view of data and state."""

    def __init__(self, data, fit_config, state, likelihood):
        tbar = data.grid.mean
        self.tc = np.ascontiguousarray(data.centered_times)
        self.logp = np.ascontiguousarray(data.log_populations)
        self.y = np.ascontiguousarray(data.counts)
        self.logfact = np.ascontiguousarray(data.log_factorial)
        self.n = float(data.n)
        self.t_first = data.grid.first - tbar
        self.t_last = data.grid.last - tbar
        self.gap = float(fit_config.gap)
        J = fit_config.jstar
        self.logpm = np.array(
            [log_prior_model(np.r_[np.ones(k), np.zeros(J - k)], J, fit_config.prior)
             for k in range(J + 1)]
        )
        self.use_lik = bool(likelihood)
        self.tbar = tbar
        self.st = np.array([state.alpha, state.beta0, state.gamma])
        self.beta = state.beta.astype(float).copy()
        self.tau = state.tau - tbar
        self.delta = state.delta.astype(np.int64).copy()
        N = data.n
        self.B = np.empty((N, J))
        self.w = np.empty(N)
        self.G = np.empty((J, J))
        self.eta = np.empty(N)
        if not K.refresh(self.st, self.beta, self.tau, self.delta, self.tc, self.logp,
                         self.B, self.w, self.G, self.eta):
            raise SingularSystemError("break-point columns singular at current tau")

    def to_state(self):
        return ModelState(self.st[0], self.st[1], self.beta.copy(),
                          self.tau + self.tbar, self.delta.copy(), self.st[2])


def initial_state(data, fit_config):
    """Null-model start: pooled rate, flat trend, evenly spaced joinpoints."""
    J = fit_config.jstar
    t1, tn = data.grid.first, data.grid.last
    tau = t1 + (tn - t1) * np.arange(1, J + 1) / (J + 1)
    alpha = np.log(data.counts.sum() / data.populations.sum()) if data.counts.sum() > 0 \
        else np.log(0.5 / data.populations.sum())
    return ModelState(alpha, 0.0, np.zeros(J), tau, np.zeros(J, dtype=int), 1.0)


def _base_scales(data, state):
    # null-model Poisson standard errors of (alpha, beta0)
    w = np.exp(data.log_populations + state.alpha + state.beta0 * data.centered_times)
    return np.array([
        1.0 / np.sqrt(w.sum()),
        1.0 / np.sqrt(np.sum(w * data.centered_times**2)),
    ])


def _chain_rng(seed, chain):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(chain,))))


# -- single-block updates on a ModelState -------------------------------------

def update_gamma(state, data, rng):
    """Exact Gibbs draw of the mixing scale; returns a new state."""
    # model prior and gap play no part in this block
    a = _Arrays(data, FitConfig(state.jstar, 1.0, "bayes1"), state, True)
    K.gamma_block(a.st, a.beta, a.delta, a.G, a.n, rng.standard_gamma(0.5 * (1 + state.jstar)))
    return a.to_state()


def update_delta(state, data, fit_config, rng, likelihood=True):
    """Gibbs sweep over the indicators; returns a new state."""
    a = _Arrays(data, fit_config, state, likelihood)
    K.delta_block(a.st, a.beta, a.delta, a.B, a.G, a.eta, a.y, a.logfact, a.logpm,
                  a.use_lik, a.n, rng.random(state.jstar))
    return a.to_state()


def update_tau(state, data, fit_config, rng, log_scales=None, likelihood=True):
    """Metropolis sweep over the locations; returns a new state."""
    J = state.jstar
    a = _Arrays(data, fit_config, state, likelihood)
    ls = np.zeros(J) if log_scales is None else np.asarray(log_scales, dtype=float).copy()
    acc = np.zeros(K.N_BLOCKS, dtype=np.int64)
    cnt = np.zeros(K.N_BLOCKS, dtype=np.int64)
    K.tau_block(a.st, a.beta, a.tau, a.delta, a.B, a.w, a.G, a.eta, a.tc, a.y, a.logfact,
                a.use_lik, a.n, a.t_first, a.t_last, a.gap, ls, 0.0,
                rng.standard_normal(J), rng.random(J), rng.random(J), rng.random(J), acc, cnt)
    return a.to_state()


def update_alpha_beta0_beta(state, data, fit_config, rng, log_scales=None,
                            likelihood=True):
    """Joint (alpha, beta0) random walk, then the beta coordinates."""
    J = state.jstar
    a = _Arrays(data, fit_config, state, likelihood)
    ls = np.zeros(1 + J) if log_scales is None else np.asarray(log_scales, dtype=float).copy()
    acc = np.zeros(K.N_BLOCKS, dtype=np.int64)
    cnt = np.zeros(K.N_BLOCKS, dtype=np.int64)
    z = rng.standard_normal(2 + 2 * J)
    u = rng.random(1 + J)
    K.alpha_beta0_block(a.st, a.beta, a.delta, a.B, a.w, a.G, a.eta, a.tc, a.logp, a.y,
                        a.logfact, a.use_lik, a.n, _base_scales(data, state), ls[:1], 0.0,
                        z[:2], u[0], acc, cnt)
    K.beta_block(a.st, a.beta, a.delta, a.B, a.G, a.eta, a.y, a.logfact, a.use_lik, a.n,
                 ls[1:], 0.0, z[2:], u[1:], acc, cnt)
    return a.to_state()


# -- full runs ------------------------------------------------------------------

def _run_chain(args):
    data, fit_config, cfg, chain = args
    J = fit_config.jstar
    rng = _chain_rng(cfg.seed, chain)
    state = initial_state(data, fit_config)
    a = _Arrays(data, fit_config, state, not cfg.prior_only)
    base = _base_scales(data, state)
    ls_tau = np.full(J, np.log(max(fit_config.gap, 0.5)))
    ls_ab = np.zeros(1)
    ls_beta = np.full(J, np.log(0.1))

    D = cfg.n_kept
    out_scal = np.empty((D, 3))
    out_beta = np.empty((D, J))
    out_tau = np.empty((D, J))
    out_delta = np.empty((D, J), dtype=np.int64)
    out_iter = np.empty(D, dtype=np.int64)
    acc = np.zeros(K.N_BLOCKS, dtype=np.int64)
    cnt = np.zeros(K.N_BLOCKS, dtype=np.int64)
    nu, nz = K.n_uniforms(J), K.n_normals(J)
    shape = 0.5 * (1 + J)

    for it0 in range(0, cfg.n_iter, BLOCK):
        m = min(BLOCK, cfg.n_iter - it0)
        Z = rng.standard_normal((m, nz))
        U = rng.random((m, nu))
        GS = rng.standard_gamma(shape, m)
        K.run_iterations(
            it0, a.st, a.beta, a.tau, a.delta, a.B, a.w, a.G, a.eta,
            a.tc, a.logp, a.y, a.logfact, a.logpm, a.use_lik, not cfg.prior_only, a.n,
            a.t_first, a.t_last, a.gap,
            base, ls_tau, ls_ab, ls_beta,
            cfg.adapt_until, cfg.burn_in, cfg.thin,
            U, Z, GS,
            out_scal, out_beta, out_tau, out_delta, out_iter, acc, cnt,
        )
    rates = np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
    scales = {
        "tau": np.exp(ls_tau).tolist(),
        "alpha_beta0": (np.exp(ls_ab[0]) * base).tolist(),
        "beta": np.exp(ls_beta).tolist(),
    }
    return out_scal, out_beta, out_tau + a.tbar, out_delta, out_iter, rates, scales


def run_chains(data, fit_config=None, sampler_config=None):
    """Run independent chains and collect thinned post burn-in draws.

    Parameters
    ----------
    data : SeriesData
    fit_config : FitConfig, optional
    sampler_config : SamplerConfig, optional
        ``prior_only=True`` switches the likelihood off and holds
        ``(alpha, beta0)`` at the start value, since their flat prior is
        improper; every other block is unchanged.

    Returns
    -------
    PosteriorDraws
        Convergence is reported by `diagnostics`, never enforced.
    """
    fit_config = (fit_config or FitConfig()).validate(data.grid)
    cfg = (sampler_config or SamplerConfig()).validate()
    jobs = [(data, fit_config, cfg, c) for c in range(cfg.n_chains)]
    if cfg.n_jobs > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.n_jobs, cfg.n_chains)) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        results = [_run_chain(job) for job in jobs]

    scal = np.stack([r[0] for r in results])
    draws = PosteriorDraws(
        alpha=scal[:, :, 0],
        beta0=scal[:, :, 1],
        gamma=scal[:, :, 2],
        beta=np.stack([r[1] for r in results]),
        tau=np.stack([r[2] for r in results]),
        delta=np.stack([r[3] for r in results]),
        iterations=results[0][4],
        acceptance=np.stack([r[5] for r in results]),
        proposal_scales=[r[6] for r in results],
        data=data,
        fit_config=fit_config,
        sampler_config=cfg,
    )
    logger.info("sampled %d chains x %d draws", draws.n_chains, draws.n_draws)
    return draws
