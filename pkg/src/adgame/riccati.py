"""Zero-sum game algebraic Riccati equation.

Solves

    A^T P + P A + Qw - P B1 R1^{-1} B1^T P + P B2 R2^{-1} B2^T P = 0

for the stabilizing solution via the stable invariant subspace of the
Hamiltonian

    H = [[A, -S], [-Qw, -A^T]],     S = B1 R1^{-1} B1^T - B2 R2^{-1} B2^T,

followed by Newton refinement of the residual.  Complex arithmetic is kept
throughout so Hermitian (not necessarily real-symmetric) solutions for
estimated models are representable; Hermitian P splits as P = P1 + j P2 with
P1 real symmetric and P2 real skew-symmetric.

When no stabilizing solution exists the solver returns a
``NoStabilizingSolution`` value (reason ``"imaginary-axis"`` or
``"graph-singular"``) rather than raising; genuine numerical breakdowns raise
``NumericalFailureError``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ContractViolationError, NumericalFailureError
from .model import GameModel, spectral_abscissa

__all__ = [
    "EPS_STAB",
    "CompositeWeights",
    "GameRiccatiSolution",
    "NoStabilizingSolution",
    "composite_weights",
    "solve_game_are",
    "hermitian_split",
    "nash_gains",
    "nash_value",
    "riccati_continuity_probe",
]

# Stability margin used to classify closed-loop matrices; scale-aware axis
# margin is derived from the Hamiltonian below.
EPS_STAB = 1e-7

# Condition cutoff past which P = X2 X1^{-1} is considered meaningless.
_GRAPH_COND_MAX = 1e10


@dataclass(frozen=True)
class CompositeWeights:
    """Stacked input matrix and signed weight blocks of the game."""

    B: np.ndarray  # [B1, B2]
    R: np.ndarray  # diag(R1, -R2)
    S: np.ndarray  # B1 R1^{-1} B1^T - B2 R2^{-1} B2^T


def composite_weights(B1, B2, R1, R2) -> CompositeWeights:
    B1 = np.atleast_2d(np.asarray(B1, dtype=float))
    B2 = np.atleast_2d(np.asarray(B2, dtype=float))
    R1 = np.atleast_2d(np.asarray(R1, dtype=float))
    R2 = np.atleast_2d(np.asarray(R2, dtype=float))
    B = np.hstack([B1, B2])
    m1, m2 = R1.shape[0], R2.shape[0]
    R = np.zeros((m1 + m2, m1 + m2))
    R[:m1, :m1] = R1
    R[m1:, m1:] = -R2
    S = B1 @ np.linalg.solve(R1, B1.T) - B2 @ np.linalg.solve(R2, B2.T)
    S = (S + S.T) / 2
    return CompositeWeights(B=B, R=R, S=S)


@dataclass(frozen=True)
class NoStabilizingSolution:
    """Negative but well-defined answer of the game ARE solver."""

    reason: str  # "imaginary-axis" | "graph-singular"

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class GameRiccatiSolution:
    """Stabilizing solution with its Hermitian split and closed loops."""

    P: np.ndarray  # complex Hermitian n x n
    P1: np.ndarray  # real symmetric part
    P2: np.ndarray  # real skew-symmetric part
    A_cl_P: np.ndarray  # A - S P (complex)
    A_cl_P1: np.ndarray  # A - S P1 (real)
    residual: float
    stabilizing_P: bool
    stabilizing_P1: bool

    def __bool__(self) -> bool:
        return True


def _are_residual(P, A, S, Qw) -> np.ndarray:
    return A.conj().T @ P + P @ A + Qw - P @ S @ P


def solve_game_are(A, B1, B2, Qw, R1, R2):
    """Stabilizing solution of the game ARE, or NoStabilizingSolution.

    The existence test is spectral: the Hamiltonian must have no eigenvalue
    within a scale-aware margin of the imaginary axis and the stable subspace
    must admit a well-conditioned graph representation [X1; X2].
    """
    A = np.atleast_2d(np.asarray(A))
    Qw = np.atleast_2d(np.asarray(Qw, dtype=float))
    n = A.shape[0]
    cw = composite_weights(B1, B2, R1, R2)
    S = cw.S

    H = np.zeros((2 * n, 2 * n), dtype=complex)
    H[:n, :n] = A
    H[:n, n:] = -S
    H[n:, :n] = -Qw
    H[n:, n:] = -A.conj().T

    eps_axis = 1e-7 * (1.0 + np.linalg.norm(H))
    try:
        ev = np.linalg.eigvals(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Hamiltonian eigensolve failed: {exc}") from exc
    if np.abs(ev.real).min() < eps_axis:
        return NoStabilizingSolution("imaginary-axis")

    try:
        T, Z, sdim = linalg.schur(H, output="complex", sort=lambda z: z.real < 0)
    except linalg.LinAlgError as exc:
        raise NumericalFailureError(f"ordered Schur failed: {exc}") from exc
    if sdim != n:
        # Eigenvalues split unevenly across the axis; no Hermitian
        # stabilizing solution exists.
        return NoStabilizingSolution("imaginary-axis")

    X1 = Z[:n, :n]
    X2 = Z[n:, :n]
    if np.linalg.cond(X1) > _GRAPH_COND_MAX:
        return NoStabilizingSolution("graph-singular")
    P = X2 @ np.linalg.inv(X1)
    P = (P + P.conj().T) / 2

    # Newton refinement: eigenvector-based P can lose digits.
    for _ in range(3):
        res = _are_residual(P, A, S, Qw)
        if np.linalg.norm(res) <= 1e-12 * (1.0 + np.linalg.norm(P)) ** 2:
            break
        Acl = A - S @ P
        try:
            delta = linalg.solve_sylvester(Acl.conj().T, Acl, -res)
        except (linalg.LinAlgError, ValueError):
            break
        P = P + delta
        P = (P + P.conj().T) / 2

    P1, P2 = hermitian_split(P)
    A_cl_P = A - S @ P
    A_cl_P1 = np.real(A) - S @ P1
    residual = float(np.linalg.norm(_are_residual(P, A, S, Qw)))
    return GameRiccatiSolution(
        P=P,
        P1=P1,
        P2=P2,
        A_cl_P=A_cl_P,
        A_cl_P1=A_cl_P1,
        residual=residual,
        stabilizing_P=spectral_abscissa(A_cl_P) < -EPS_STAB,
        stabilizing_P1=spectral_abscissa(A_cl_P1) < -EPS_STAB,
    )


def hermitian_split(P) -> tuple[np.ndarray, np.ndarray]:
    """Split Hermitian P into real symmetric P1 and real skew-symmetric P2."""
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    if np.linalg.norm(P - P.conj().T) > 1e-8 * (1.0 + np.linalg.norm(P)):
        raise ContractViolationError("hermitian_split: input is not Hermitian")
    P1 = (P.real + P.real.T) / 2
    P2 = (P.imag - P.imag.T) / 2
    return P1, P2


def nash_gains(sol: GameRiccatiSolution, B1, B2, R1, R2) -> tuple[np.ndarray, np.ndarray]:
    """Feedback gains of the equilibrium pair, from the real part P1.

    L1 = -R1^{-1} B1^T P1 (minimizer), L2 = R2^{-1} B2^T P1 (maximizer).
    """
    if not (sol.stabilizing_P and sol.stabilizing_P1):
        raise ContractViolationError("nash_gains requires a doubly stabilizing solution")
    B1 = np.atleast_2d(np.asarray(B1, dtype=float))
    B2 = np.atleast_2d(np.asarray(B2, dtype=float))
    R1 = np.atleast_2d(np.asarray(R1, dtype=float))
    R2 = np.atleast_2d(np.asarray(R2, dtype=float))
    L1 = -np.linalg.solve(R1, B1.T @ sol.P1)
    L2 = np.linalg.solve(R2, B2.T @ sol.P1)
    return L1, L2


def nash_value(P1, D) -> float:
    """Equilibrium time-average payoff tr(D^T P1 D)."""
    P1 = np.atleast_2d(np.asarray(P1, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    return float(np.trace(D.T @ P1 @ D))


def riccati_continuity_probe(
    model: GameModel,
    perturbation_scale: float,
    n_scales: int = 3,
    seed: int = 0,
) -> dict:
    """Empirical local-Lipschitz probe of the map (A, B1, B2) -> P.

    Perturbs the plant entrywise by uniform noise at a decreasing sequence of
    scales and reports ||P(E) - P(E0)||_F / scale at each; for an analytic
    solution map the ratios stabilize as the scale shrinks.  Failed perturbed
    solves are flagged in the report, not raised.
    """
    nominal = solve_game_are(model.A, model.B1, model.B2, model.Qw, model.R1, model.R2)
    if not nominal:
        return {"applicable": False, "reason": nominal.reason, "ratios": []}
    if perturbation_scale == 0:
        return {"applicable": True, "ratios": [0.0], "scales": [0.0], "failed": []}

    rng = np.random.default_rng(seed)
    scales = [perturbation_scale / (10**i) for i in range(n_scales)]
    ratios, failed = [], []
    for s in scales:
        dA = rng.uniform(-s, s, model.A.shape)
        dB1 = rng.uniform(-s, s, model.B1.shape)
        dB2 = rng.uniform(-s, s, model.B2.shape)
        sol = solve_game_are(
            model.A + dA, model.B1 + dB1, model.B2 + dB2, model.Qw, model.R1, model.R2
        )
        if not sol:
            failed.append(s)
            ratios.append(np.nan)
        else:
            ratios.append(float(np.linalg.norm(sol.P - nominal.P)) / s)
    return {"applicable": True, "scales": scales, "ratios": ratios, "failed": failed}
