"""Stochastic trust-region optimization with adaptive subsampling and L-SR1 models."""

from .driver import ASNTR, NtrParams
from .driver import run as run_asntr
from .lsr1 import LSR1, gamma_init
from .storm import StormLike, StormParams
from .storm import run as run_storm
from .trace import IterationRecord, RunResult
from .tr_subproblem import TrSolution, solve_dense, solve_obs

__version__ = "0.1.0"
