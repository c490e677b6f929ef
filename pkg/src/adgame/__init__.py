"""Adaptive strategies for two-player zero-sum LQ stochastic differential games.

Subpackages follow the pipeline: ``model`` (plant data and dense kernels),
``riccati`` (game ARE and Nash gains), ``estimator`` (weighted least squares
and random regularization), ``strategy`` (per-epoch gain selection and
dither), ``sim`` (closed-loop SDE integration), ``diagnostics`` (statistical
experiments), ``cli`` (command-line front end).
"""

from .model import GameModel
from .riccati import GameRiccatiSolution, NoStabilizingSolution, solve_game_are
from .sim import SimConfig, Trajectory, simulate_adaptive, simulate_fixed_gains

__all__ = [
    "GameModel",
    "GameRiccatiSolution",
    "NoStabilizingSolution",
    "solve_game_are",
    "SimConfig",
    "Trajectory",
    "simulate_adaptive",
    "simulate_fixed_gains",
]

__version__ = "0.1.0"
