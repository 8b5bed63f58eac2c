from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bayesjoinpoint.basis import (
    BreakpointBasis,
    TimeGrid,
    breakpoint_slopes,
    design_columns,
    eval_breakpoint,
    eval_breakpoints,
    solve_breakpoint,
)
from bayesjoinpoint.exceptions import OutOfRangeError, SingularSystemError


def test_timegrid_validation():
    with pytest.raises(ValueError):
        TimeGrid([1, 2, 3])
    with pytest.raises(ValueError):
        TimeGrid([1, 2, 2, 3])
    with pytest.raises(ValueError):
        TimeGrid([1, 2, np.nan, 4])
    g = TimeGrid([1990, 1991, 1993, 1994])
    assert g.n == 4 and g.first == 1990 and g.last == 1994
    assert g.mean == pytest.approx(1992.0)
    with pytest.raises(ValueError):
        g.times[0] = 0.0


def test_exact_golden_small_grid():
    # 5 integer points, tau = 2.5: rational solution checked digit for digit
    t = [0, 1, 2, 3, 4]
    a0, b0, a1, b1 = oracles.breakpoint_exact(t, 2.5)
    b = solve_breakpoint(t, 2.5)
    for got, want in zip((b.a0, b.b0, b.a1, b.b1), (a0, b0, a1, b1)):
        assert got == pytest.approx(float(want), abs=1e-13)
    # sanity of the oracle itself
    vals = [a0 + b0 * Fraction(x) if x <= 2.5 else a1 + b1 * Fraction(x) for x in t]
    assert sum(vals) == 0
    assert sum(Fraction(x) * v for x, v in zip(t, vals)) == 0
    assert a0 + b0 * Fraction(5, 2) == 1


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(5, 40),
    start=st.floats(1800, 2100),
    frac=st.floats(0.02, 0.98),
)
def test_matches_exact_rational_solution(n, start, frac):
    t = start + np.arange(n, dtype=float)
    tau = t[0] + frac * (t[-1] - t[0])
    a0, b0, a1, b1 = oracles.breakpoint_exact(t, tau)
    want = np.array([float(a0 + b0 * Fraction(x)) if x <= tau else float(a1 + b1 * Fraction(x))
                     for x in t])
    np.testing.assert_allclose(design_columns(t, [tau])[:, 0], want, atol=1e-12)


def test_peak_and_continuity_and_moments(break_series):
    grid = break_series.grid
    for tau in (1983.2, 1994.0, 1994.5, 2004.9):
        b = solve_breakpoint(grid, tau)
        assert b(tau) == pytest.approx(1.0, abs=1e-12)
        assert b.a0 + b.b0 * tau == pytest.approx(b.a1 + b.b1 * tau, abs=1e-9)
        v = b(grid.times)
        assert abs(v.sum()) < 1e-10
        assert abs(((grid.times - grid.mean) * v).sum()) < 1e-9


def test_grid_point_equal_to_tau_goes_left():
    t = np.arange(10.0)
    b = solve_breakpoint(t, 4.0)
    assert b(4.0) == pytest.approx(1.0)
    # a point exactly at tau belongs to the left piece by definition
    assert eval_breakpoint(b, 4.0) == pytest.approx(b.a0 + b.b0 * 4.0, abs=1e-12)


def test_extrapolates_linearly_outside_grid():
    t = np.arange(10.0)
    b = solve_breakpoint(t, 5.5)
    x = np.array([10.0, 12.0, 14.0])
    np.testing.assert_allclose(np.diff(b(x)), 2 * b.b1, rtol=1e-12)


def test_out_of_range():
    t = np.arange(6.0)
    with pytest.raises(OutOfRangeError):
        solve_breakpoint(t, 0.0)
    with pytest.raises(OutOfRangeError):
        solve_breakpoint(t, 5.0)
    with pytest.raises(OutOfRangeError):
        solve_breakpoint(t, 7.0)
    # a single point on one side is still determined by the four conditions
    b = solve_breakpoint(t, 0.5)
    assert abs(b(t).sum()) < 1e-12 and b(0.5) == pytest.approx(1.0)


def test_design_columns_shapes_and_at():
    t = np.arange(2000.0, 2012.0)
    X = design_columns(t, [2003.0, 2007.5])
    assert X.shape == (12, 2)
    assert design_columns(t, []).shape == (12, 0)
    fut = np.array([2012.0, 2013.0])
    Xf = design_columns(t, [2003.0], at=fut)
    b = solve_breakpoint(t, 2003.0)
    np.testing.assert_allclose(Xf[:, 0], b(fut))


def test_basis_is_callable_dataclass():
    b = solve_breakpoint(np.arange(8.0), 3.3)
    assert isinstance(b, BreakpointBasis)
    assert isinstance(b.b0, float)
    with pytest.raises(Exception):
        b.tau = 1.0


def test_vectorised_slopes_agree_with_lu_route():
    rng = np.random.default_rng(5)
    t = np.sort(rng.choice(np.arange(1970.0, 2020.0), 30, replace=False))
    taus = rng.uniform(t[2], t[-3], size=(7, 3))
    b0, b1 = breakpoint_slopes(t, taus)
    vals = eval_breakpoints(taus, b0, b1, t)
    for idx in np.ndindex(taus.shape):
        ref = solve_breakpoint(t, taus[idx])
        assert b0[idx] == pytest.approx(ref.b0, rel=1e-9)
        assert b1[idx] == pytest.approx(ref.b1, rel=1e-9)
        np.testing.assert_allclose(vals[idx], ref(t), atol=1e-11)


def test_conditioning_guard(monkeypatch):
    import bayesjoinpoint.basis as basis

    monkeypatch.setattr(basis, "RCOND_MIN", 1.0)
    with pytest.raises(SingularSystemError):
        solve_breakpoint(np.arange(8.0), 3.5)
