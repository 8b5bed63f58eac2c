"""Frequentist comparator: profile-likelihood joinpoint fits scored by BIC.

For each number of joinpoints ``J`` the locations are found by exhaustive
search over a regular grid of admissible tuples (ordered, at least ``gap``
apart and away from the ends); each candidate is a Poisson GLM with offset
``log P`` fitted by Newton-Raphson in the same orthogonal break-point
parameterization the Bayesian model uses. BIC counts the intercept, the
slope, and a magnitude plus a location per joinpoint: ``k = 2 + 2J``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .basis import design_columns
from .exceptions import EmptyGridError, NoConvergenceError, SingularDesignError

GRAD_TOL = 1e-8
MAX_ITER = 100


@dataclass
class GLMFit:
    coef: np.ndarray
    loglik: float
    n_iter: int
    gradient: np.ndarray
    covariance: np.ndarray


def poisson_loglik(X, coef, data):
    eta = data.log_populations + X @ coef
    return float(np.sum(data.counts * eta - np.exp(eta) - data.log_factorial))


def _newton(X, y, offset, logfact, beta, check=True, trace=None):
    """Damped Newton-Raphson for the Poisson log-likelihood.

    Step-halving keeps the log-likelihood (equivalently the deviance)
    monotone. Returns (coef, loglik, n_iter, gradient, hessian).
    """
    eta = offset + X @ beta
    mu = np.exp(eta)
    ll = np.sum(y * eta - mu - logfact)
    if trace is not None:
        trace.append(float(ll))
    for it in range(1, MAX_ITER + 1):
        grad = X.T @ (y - mu)
        H = X.T @ (mu[:, None] * X)
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("information matrix is singular") from exc
        step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            eta_c = offset + X @ cand
            if np.all(np.abs(eta_c) < 700):
                mu_c = np.exp(eta_c)
                ll_c = np.sum(y * eta_c - mu_c - logfact)
                if ll_c >= ll - 1e-12 * abs(ll):
                    break
            t *= 0.5
        else:
            raise NoConvergenceError("step-halving failed to improve the likelihood")
        beta, eta, mu, ll = cand, eta_c, mu_c, ll_c
        if trace is not None:
            trace.append(float(ll))
        grad = X.T @ (y - mu)
        if np.linalg.norm(grad) < GRAD_TOL:
            return beta, float(ll), it, grad, X.T @ (mu[:, None] * X)
    if check:
        raise NoConvergenceError(f"Newton-Raphson did not converge in {MAX_ITER} iterations")
    return beta, float(ll), MAX_ITER, grad, X.T @ (mu[:, None] * X)


def fit_glm(X, data, start=None, trace=None):
    """Poisson regression of counts on `X` with offset ``log P``.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Full column rank design.
    data : SeriesData
    start : array_like, optional
        Starting coefficients; defaults to least squares on
        ``log((y + 0.5) / P)``.
    trace : list, optional
        Receives the log-likelihood after every iterate.

    Returns
    -------
    GLMFit
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != data.n:
        raise ValueError(f"design must be ({data.n}, p), got {X.shape}")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError("design matrix is not of full column rank")
    offset = data.log_populations
    if start is None:
        start = np.linalg.lstsq(X, np.log((data.counts + 0.5) / data.populations), rcond=None)[0]
    coef, ll, it, grad, H = _newton(X, data.counts, offset, data.log_factorial,
                                    np.asarray(start, dtype=float), trace=trace)
    return GLMFit(coef, ll, it, grad, np.linalg.inv(H))


def null_design(data):
    return np.column_stack([np.ones(data.n), data.centered_times])


def candidate_locations(data, gap, grid_step=0.25):
    """Regular grid strictly inside ``(t_1 + gap, t_n - gap)``."""
    lo, hi = data.grid.first + gap, data.grid.last - gap
    k = np.arange(1, int(math.floor((hi - lo) / grid_step)) + 2)
    cand = lo + grid_step * k
    return cand[cand < hi - 1e-9 * grid_step]


def admissible_tuples(cand, J, gap):
    """Index tuples of increasing locations at least `gap` apart, lexicographic."""
    m = cand.size

    def extend(prefix):
        if len(prefix) == J:
            yield tuple(prefix)
            return
        start = prefix[-1] + 1 if prefix else 0
        for i in range(start, m):
            if prefix and not cand[prefix[-1]] + gap < cand[i]:
                continue
            yield from extend(prefix + [i])

    return extend([])


@dataclass
class ProfileFit:
    J: int
    taus: np.ndarray
    coef: np.ndarray
    loglik: float
    tuples: np.ndarray = field(repr=False, default=None)
    profile: np.ndarray = field(repr=False, default=None)
    candidates: np.ndarray = field(repr=False, default=None)

    def location_intervals(self, level=0.95):
        """Per-rank range of locations inside the likelihood-ratio region.

        The region keeps tuples with ``2 (l_max - l) <= chi2_1(level)``;
        projecting it on each rank gives a conservative interval.
        """
        if self.J == 0:
            return np.empty((0, 2))
        cut = self.loglik - 0.5 * chi2.ppf(level, 1)
        keep = self.tuples[self.profile >= cut]
        locs = self.candidates[keep]
        return np.column_stack([locs.min(axis=0), locs.max(axis=0)])


def _batch_newton(Xb, y, offset, logfact, start, n_iter=30):
    """Undamped Newton on a stack of designs ``Xb`` (m, n, p).

    Returns coefficients, log-likelihoods and a mask of fits that reached
    the gradient tolerance with a non-decreasing likelihood path; the rest
    go through the damped scalar routine.
    """
    m = Xb.shape[0]
    beta = np.broadcast_to(start, (m, start.size)).copy()
    ok = np.ones(m, dtype=bool)
    ll_prev = np.full(m, -np.inf)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_iter):
            eta = offset + np.einsum("mnp,mp->mn", Xb, beta)
            bad = np.any(np.abs(eta) >= 700, axis=1)
            mu = np.exp(np.where(bad[:, None], 0.0, eta))
            ll = np.sum(y * eta - mu - logfact, axis=1)
            ok &= ~bad & (ll >= ll_prev - 1e-12 * np.abs(ll))
            ll_prev = ll
            grad = np.einsum("mnp,mn->mp", Xb, y - mu)
            if np.all(np.linalg.norm(grad, axis=1)[ok] < GRAD_TOL):
                break
            H = np.einsum("mnp,mn,mnq->mpq", Xb, mu, Xb)
            try:
                step = np.linalg.solve(H, grad[..., None])[..., 0]
            except np.linalg.LinAlgError:
                return beta, ll, np.zeros(m, dtype=bool)
            beta = beta + np.where(ok[:, None], step, 0.0)
    ok &= np.linalg.norm(grad, axis=1) < GRAD_TOL
    return beta, ll, ok


def profile_fit(data, J, gap=2.0, grid_step=0.25, batch=20_000):
    """Best J-joinpoint fit by exhaustive search over a location grid.

    Ties keep the lexicographically first tuple.
    """
    X0 = null_design(data)
    null = fit_glm(X0, data)
    if J == 0:
        return ProfileFit(0, np.empty(0), null.coef, null.loglik,
                          np.empty((1, 0), dtype=int), np.array([null.loglik]), np.empty(0))
    cand = candidate_locations(data, gap, grid_step)
    if cand.size == 0:
        raise EmptyGridError("no admissible joinpoint locations on the grid")
    cols = design_columns(data.grid, cand)
    y, off, lf = data.counts, data.log_populations, data.log_factorial
    start = np.r_[null.coef, np.zeros(J)]

    all_tuples = np.array(list(admissible_tuples(cand, J, gap)), dtype=int).reshape(-1, J)
    lls = np.full(len(all_tuples), -np.inf)
    coefs = np.empty((len(all_tuples), 2 + J))
    for lo in range(0, len(all_tuples), batch):
        chunk = all_tuples[lo:lo + batch]
        Xb = np.concatenate(
            [np.broadcast_to(X0, (len(chunk),) + X0.shape), cols[:, chunk].transpose(1, 0, 2)],
            axis=2,
        )
        beta, ll, ok = _batch_newton(Xb, y, off, lf, start)
        for i in np.flatnonzero(~ok):
            try:
                beta[i], ll[i], *_ = _newton(Xb[i], y, off, lf, start.copy())
            except (SingularDesignError, NoConvergenceError):
                ll[i] = -np.inf
        lls[lo:lo + batch] = ll
        coefs[lo:lo + batch] = beta
    fitted = np.isfinite(lls)
    if not fitted.any():
        raise EmptyGridError(f"no admissible {J}-joinpoint configuration")
    tuples, lls, coefs = all_tuples[fitted], lls[fitted], coefs[fitted]
    i = int(np.argmax(lls))  # first maximum: lexicographic tie-break
    return ProfileFit(J, cand[tuples[i]], coefs[i], float(lls[i]), tuples, lls, cand)


def bic(loglik, J, n):
    return -2.0 * loglik + (2 + 2 * J) * math.log(n)


@dataclass
class BICSelection:
    J: int
    fits: list
    bics: np.ndarray

    @property
    def fit(self):
        return self.fits[self.J]

    def table(self):
        """Rows of (J, loglik, bic, taus, chosen)."""
        return [
            (f.J, f.loglik, float(b), f.taus.tolist(), f.J == self.J)
            for f, b in zip(self.fits, self.bics)
        ]


def select_bic(data, jmax, gap=2.0, grid_step=0.25):
    """Profile fits for J = 0..jmax; pick the smallest BIC, ties to smaller J."""
    if jmax < 0:
        raise ValueError("jmax must be >= 0")
    fits = []
    for J in range(jmax + 1):
        try:
            fits.append(profile_fit(data, J, gap, grid_step))
        except EmptyGridError:
            if J == 0:
                raise
            break
    bics = np.array([bic(f.loglik, f.J, data.n) for f in fits])
    chosen = int(np.argmin(bics))  # first minimum: ties go to smaller J
    return BICSelection(chosen, fits, bics)
