"""Bayesian joinpoint regression for Poisson count series.

The number of change-points is unknown: every candidate model lives inside
one fixed-dimension encompassing model, and binary indicators switch
break-points on and off. See :class:`BayesianJoinpointRegressor` for the
estimator interface and :mod:`bayesjoinpoint.cli` for the command line.
"""
__version__ = "0.1.0"

from .basis import BreakpointBasis, TimeGrid, design_columns, solve_breakpoint
from .baseline import profile_fit, select_bic
from .estimator import BayesianJoinpointRegressor, JoinpointBIC
from .exceptions import JoinpointError
from .model import FitConfig, ModelState, SeriesData
from .sampler import PosteriorDraws, SamplerConfig, run_chains
from .summaries import FitReport, summarize

__all__ = [
    "BayesianJoinpointRegressor",
    "BreakpointBasis",
    "FitConfig",
    "FitReport",
    "JoinpointBIC",
    "JoinpointError",
    "ModelState",
    "PosteriorDraws",
    "SamplerConfig",
    "SeriesData",
    "TimeGrid",
    "design_columns",
    "profile_fit",
    "run_chains",
    "select_bic",
    "solve_breakpoint",
    "summarize",
]
