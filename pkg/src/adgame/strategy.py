"""Per-epoch gain selection and the diminishing Wiener dither.

Each integer epoch turns the regularized estimate into feedback gains:

* Case (i), ``RICCATI_NASH``: the estimated-model game ARE has a solution
  whose full closed loop and real-part closed loop are both stable; the
  players use L1 = -R1^{-1} B1_hat^T P1, L2 = R2^{-1} B2_hat^T P1.
* Case (ii), ``GRAMIAN_FALLBACK``: otherwise the stacked gain
  [L1; L2] = -B_hat^T W^{-1}(0, T0) from the reversed-time controllability
  Gramian stabilizes the estimated model for any T0 > 0.

On top of the feedback term each player adds the diminishing excitation
gamma_k (v_i(t) - v_i(k)) with gamma_k = (log k / sqrt k)^{1/2}, which decays
slowly enough to secure consistency of the estimates but fast enough to
leave stability and the equilibrium payoff untouched.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, NumericalFailureError
from .estimator import RegularizedEstimate
from .model import controllability_gramian, is_controllable, spectral_abscissa
from .riccati import nash_gains, solve_game_are

__all__ = [
    "Mode",
    "StrategyGains",
    "DitherState",
    "select_gains",
    "gramian_gains",
    "gamma_schedule",
    "apply_strategy",
]


class Mode(enum.Enum):
    RICCATI_NASH = "riccati-nash"
    GRAMIAN_FALLBACK = "gramian-fallback"


@dataclass(frozen=True)
class StrategyGains:
    L1: np.ndarray  # m1 x n
    L2: np.ndarray  # m2 x n
    mode: Mode
    epoch: int
    P1_used: np.ndarray | None = None


def gramian_gains(A, B, T0: float) -> np.ndarray:
    """Stabilizing gain -B^T W^{-1}(0, T0) for any controllable pair."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not is_controllable(A, B):
        raise ContractViolationError("gramian_gains requires a controllable pair")
    W = controllability_gramian(A, B, T0)
    try:
        K = -np.linalg.solve(W, B).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Gramian numerically singular: {exc}") from exc
    return K


def select_gains(est: RegularizedEstimate, Qw, R1, R2, T0: float = 1.0) -> StrategyGains:
    """Case (i)/(ii) gain construction for one epoch's estimate."""
    sol = solve_game_are(est.A_hat, est.B1_hat, est.B2_hat, Qw, R1, R2)
    if sol and sol.stabilizing_P and sol.stabilizing_P1:
        L1, L2 = nash_gains(sol, est.B1_hat, est.B2_hat, R1, R2)
        return StrategyGains(L1=L1, L2=L2, mode=Mode.RICCATI_NASH, epoch=est.epoch, P1_used=sol.P1)
    m1 = est.B1_hat.shape[1]
    K = gramian_gains(est.A_hat, np.hstack([est.B1_hat, est.B2_hat]), T0)
    return StrategyGains(L1=K[:m1], L2=K[m1:], mode=Mode.GRAMIAN_FALLBACK, epoch=est.epoch)


def closed_loop(est: RegularizedEstimate, g: StrategyGains) -> np.ndarray:
    """Estimated closed-loop matrix A_hat + B1_hat L1 + B2_hat L2."""
    return est.A_hat + est.B1_hat @ g.L1 + est.B2_hat @ g.L2


def gamma_schedule(k: int, floor_k: int = 2) -> float:
    """Dither amplitude (log k / sqrt k)^{1/2}; clamped at the k=floor_k value.

    The formula is degenerate for k in {0, 1} (log 1 = 0, division at 0);
    early epochs keep the floor-epoch excitation level.  ``floor_k`` can be
    raised in config to hold early excitation higher for longer.
    """
    if k < 0:
        raise ContractViolationError("epoch index must be >= 0")
    if floor_k < 2:
        raise ContractViolationError("floor_k must be >= 2")
    k = max(k, floor_k)
    return math.sqrt(math.log(k) / math.sqrt(k))


@dataclass
class DitherState:
    """Within-epoch accumulated Wiener increments for both players.

    ``v1_accum``/``v2_accum`` hold v_i(t) - v_i(k); the simulator resets them
    at each integer epoch and advances them per step.
    """

    gamma_k: float
    v1_accum: np.ndarray
    v2_accum: np.ndarray

    @classmethod
    def start_epoch(cls, k: int, m1: int, m2: int, enabled: bool = True) -> "DitherState":
        gamma = gamma_schedule(k) if enabled else 0.0
        return cls(gamma_k=gamma, v1_accum=np.zeros(m1), v2_accum=np.zeros(m2))

    def advance(self, dv1: np.ndarray, dv2: np.ndarray) -> None:
        self.v1_accum += dv1
        self.v2_accum += dv2


def apply_strategy(g: StrategyGains, d: DitherState, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Players' inputs: feedback plus the accumulated dither for this step."""
    x = np.asarray(x, dtype=float).ravel()
    u1 = g.L1 @ x + d.gamma_k * d.v1_accum
    u2 = g.L2 @ x + d.gamma_k * d.v2_accum
    return u1, u2
