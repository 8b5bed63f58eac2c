"""Break-point functions for the orthogonal joinpoint parameterization.

A break-point centred at ``tau`` is the continuous two-piece linear function

    B(t) = a0 + b0 * t    for t <= tau
    B(t) = a1 + b1 * t    for t >  tau

pinned down by four conditions on the observation grid: continuity at
``tau``, zero sum, zero first moment in ``t`` and ``B(tau) = 1``. The last
three make every break-point column orthogonal to the intercept and the slope
columns, so adding a joinpoint never changes what the global intercept and
slope mean.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .exceptions import OutOfRangeError, SingularSystemError

RCOND_MIN = 1e-12


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing observation times (years)."""

    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float).reshape(-1)
        if t.size < 4:
            raise ValueError(f"time grid needs at least 4 points, got {t.size}")
        if not np.all(np.isfinite(t)):
            raise ValueError("time grid contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def n(self):
        return self.times.size

    @property
    def mean(self):
        return float(self.times.mean())

    @property
    def first(self):
        return float(self.times[0])

    @property
    def last(self):
        return float(self.times[-1])

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class BreakpointBasis:
    """Coefficients of one break-point function; callable on times."""

    tau: float
    a0: float
    b0: float
    a1: float
    b1: float

    def __call__(self, t):
        return eval_breakpoint(self, t)


def _as_grid(grid):
    return grid if isinstance(grid, TimeGrid) else TimeGrid(grid)


def solve_breakpoint(grid, tau):
    """Solve the four defining constraints for the break-point at `tau`.

    The 4x4 system in ``(a0, b0, a1, b1)`` is assembled in centred and
    scaled time, factorised by LU with partial pivoting and mapped back to
    the original time units. Grid points equal to ``tau`` go to the left
    piece.

    Parameters
    ----------
    grid : TimeGrid or array_like
        Observation times.
    tau : float
        Change-point location, strictly inside ``(t_1, t_n)``.

    Returns
    -------
    BreakpointBasis

    Raises
    ------
    OutOfRangeError
        If `tau` is not strictly inside the observation window.
    SingularSystemError
        If either piece is empty or the system's reciprocal condition
        number falls below 1e-12.
    """
    grid = _as_grid(grid)
    tau = float(tau)
    t = grid.times
    if not (t[0] < tau < t[-1]):
        raise OutOfRangeError(f"tau={tau!r} outside ({float(t[0])!r}, {float(t[-1])!r})")
    left = t <= tau
    if left.all() or not left.any():
        raise SingularSystemError(f"tau={tau!r} leaves an empty piece")

    centre = grid.mean
    half_range = 0.5 * (t[-1] - t[0])
    s = (t - centre) / half_range
    sig = (tau - centre) / half_range
    sl, sr = s[left], s[~left]
    A = np.array(
        [
            [1.0, sig, -1.0, -sig],
            [sl.size, sl.sum(), sr.size, sr.sum()],
            [sl.sum(), (sl * sl).sum(), sr.sum(), (sr * sr).sum()],
            [1.0, sig, 0.0, 0.0],
        ]
    )
    rhs = np.array([0.0, 0.0, 0.0, 1.0])
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(A, 1)
    if not np.isfinite(cond) or 1.0 / cond < RCOND_MIN:
        raise SingularSystemError(f"break-point system at tau={tau!r} is singular")
    a0s, b0s, a1s, b1s = lu_solve(lu_factor(A), rhs)

    # back to original time units: a' + b' (t - centre) / h
    b0, b1 = b0s / half_range, b1s / half_range
    return BreakpointBasis(
        tau=tau,
        a0=float(a0s - b0 * centre),
        b0=float(b0),
        a1=float(a1s - b1 * centre),
        b1=float(b1),
    )


def eval_breakpoint(basis, t):
    """Evaluate a break-point at scalar or array `t`.

    Defined on the whole real line; outside the grid the outer pieces are
    extended linearly.
    """
    t_arr = np.asarray(t, dtype=float)
    # anchored at the unit peak: same lines as a + b*t, without the
    # cancellation a ~ -b*t suffers on calendar-year grids
    d = t_arr - basis.tau
    out = 1.0 + np.where(d <= 0, basis.b0, basis.b1) * d
    if out.ndim == 0:
        return float(out)
    return out


def design_columns(grid, taus, at=None):
    """Break-point design matrix.

    Parameters
    ----------
    grid : TimeGrid or array_like
        Grid the constraints are imposed on.
    taus : array_like of float
        Change-point locations; may be empty.
    at : array_like of float, optional
        Times to evaluate at (e.g. a forecast grid). Defaults to the grid.

    Returns
    -------
    ndarray of shape (len(at), len(taus))
    """
    grid = _as_grid(grid)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    times = grid.times if at is None else np.atleast_1d(np.asarray(at, dtype=float))
    out = np.empty((times.size, taus.size))
    for j, tau in enumerate(taus):
        out[:, j] = eval_breakpoint(solve_breakpoint(grid, tau), times)
    return out


def breakpoint_slopes(grid, taus):
    """Left and right slopes of many break-points at once.

    Uses the equivalent form ``B(t) = 1 + b0 (t - tau)`` left of ``tau`` and
    ``1 + b1 (t - tau)`` right of it, whose two moment conditions solve in
    closed form. No range or conditioning checks; meant for bulk evaluation
    of locations already known to be admissible (e.g. posterior draws).

    Returns
    -------
    b0, b1 : ndarray, same shape as `taus`
    """
    grid = _as_grid(grid)
    tc = grid.times - grid.mean
    taus = np.asarray(taus, dtype=float)
    d = tc - (taus[..., None] - grid.mean)
    p = np.maximum(d, 0.0)
    s1, s2 = d.sum(-1), p.sum(-1)
    q1, q2 = (tc * d).sum(-1), (tc * p).sum(-1)
    det = s1 * q2 - s2 * q1
    n, st = tc.size, tc.sum()
    u = (-n * q2 + st * s2) / det
    v = (-s1 * st + n * q1) / det
    return u, u + v


def eval_breakpoints(taus, b0, b1, t):
    """Evaluate break-points given by `breakpoint_slopes` at times `t`.

    Broadcasts ``taus`` (shape S) against ``t`` (shape T) to shape S + T.
    """
    taus = np.asarray(taus, dtype=float)[..., None]
    d = np.asarray(t, dtype=float) - taus
    return 1.0 + np.where(d <= 0, np.asarray(b0)[..., None], np.asarray(b1)[..., None]) * d
